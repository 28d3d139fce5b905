#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ragqa/promptkit.hpp"
#include "ragqa/segmenter.hpp"
#include "test_support.hpp"

using namespace ragqa;

namespace {

// Counts the letter x only; lets a test pick exact passage costs.
const TokenCounter kXCounter{"x", [](std::string_view t) {
                                 std::size_t n = 0;
                                 for (char c : t) n += c == 'x';
                                 return n;
                             }};

Passage passage(const std::string& doc, std::size_t ordinal, const std::string& text,
                std::vector<std::string> headings = {}) {
    Passage p;
    p.id = doc + ":" + std::to_string(ordinal);
    p.document_id = doc;
    p.document_title = "Title " + doc;
    p.heading_path = std::move(headings);
    p.ordinal = ordinal;
    p.text = text;
    p.paragraph_count = 1;
    p.token_count = default_token_count(text);
    return p;
}

std::vector<RetrievedPassage> x_hits(const std::vector<std::size_t>& costs) {
    std::vector<RetrievedPassage> hits;
    for (std::size_t i = 0; i < costs.size(); ++i)
        hits.push_back({passage("d", i, std::string(costs[i], 'x')), 0.1 * static_cast<double>(i)});
    return hits;
}

std::string template_file() { return testsupport::slurp(std::filesystem::path(RAGQA_SOURCE_DIR) / "templates" / "default.template"); }

// Replaces the passage block and the question with their placeholders.
std::string masked(const PromptBundle& b, const std::string& question) {
    PromptBundle copy = b;
    auto& intro = copy.messages.at(2).content;
    const auto block = b.passage_block();
    const auto p = intro.rfind(block);
    EXPECT_NE(p, std::string::npos);
    EXPECT_EQ(p + block.size(), intro.size());
    intro.replace(p, block.size(), "{PASSAGES}");
    auto& q = copy.messages.at(3).content;
    const auto qp = q.find("Question: " + question + "\n");
    EXPECT_NE(qp, std::string::npos);
    q.replace(qp + 10, question.size(), "{QUESTION}");
    return render_bundle(copy);
}

bool is_subsequence(const std::vector<std::string>& sub, const std::vector<RetrievedPassage>& hits) {
    std::size_t i = 0;
    for (const auto& h : hits)
        if (i < sub.size() && sub[i] == h.passage.id) ++i;
    return i == sub.size();
}

} // namespace

TEST(FlattenPassage, NoHeading) {
    Passage p = passage("d", 0, "x");
    p.document_title = "D";
    EXPECT_EQ(flatten_passage(p), "From document \"D\":\nx\n\n");
}

TEST(FlattenPassage, HeadingPathLine) {
    const auto flat = flatten_passage(passage("d", 0, "body", {"Part III", "Article 14"}));
    EXPECT_EQ(flat, "From document \"Title d\":\nPart III > Article 14:\nbody\n\n");
    EXPECT_NE(flat.find("\nPart III > Article 14:\n"), std::string::npos);
}

TEST(FlattenPassage, ConcatenationSeparatedByOneBlankLine) {
    const auto two = flatten_passage(passage("a", 0, "first")) + flatten_passage(passage("b", 0, "second"));
    EXPECT_NE(two.find("first\n\nFrom document"), std::string::npos);
    EXPECT_EQ(two.find("\n\n\n"), std::string::npos);
}

TEST(AssemblePrompt, SkipsOverflowAndKeepsGoing_4_4_4) {
    const auto hits = x_hits({4, 4, 4});
    const auto b = assemble_prompt("q?", hits, {10, 4097, 512}, kXCounter);
    EXPECT_EQ(b.included_passage_ids(), (std::vector<std::string>{"d:0", "d:1"}));
    EXPECT_EQ(b.passage_tokens_used, 8u);
    EXPECT_EQ(b.skipped_count(), 1u);
    EXPECT_FALSE(b.no_passages_fit);
}

TEST(AssemblePrompt, SkipsOverflowAndKeepsGoing_12_4) {
    const auto b = assemble_prompt("q?", x_hits({12, 4}), {10, 4097, 512}, kXCounter);
    EXPECT_EQ(b.included_passage_ids(), std::vector<std::string>{"d:1"});
    EXPECT_EQ(b.passage_tokens_used, 4u);
}

TEST(AssemblePrompt, SkipThenLaterSmallerFits) {
    const auto b = assemble_prompt("q?", x_hits({6, 5, 4, 1}), {10, 4097, 512}, kXCounter);
    EXPECT_EQ(b.included_passage_ids(), (std::vector<std::string>{"d:0", "d:2"}));
    EXPECT_EQ(b.passage_tokens_used, 10u);
}

TEST(AssemblePrompt, ZeroHits) {
    const auto b = assemble_prompt("What is an EIA?", {});
    ASSERT_EQ(b.messages.size(), 4u);
    EXPECT_TRUE(b.no_passages_fit);
    EXPECT_TRUE(b.packed.empty());
    EXPECT_EQ(b.messages[0].role, Role::system);
    EXPECT_EQ(b.messages[1].role, Role::user);
    EXPECT_EQ(b.messages[0].content, b.messages[1].content);
    EXPECT_TRUE(b.messages[2].content.starts_with("Below are some paragraphs to consider"));
    EXPECT_EQ(b.messages[2].content.find("From document"), std::string::npos);
    EXPECT_NE(b.messages[3].content.find("Question: What is an EIA?"), std::string::npos);
    EXPECT_TRUE(b.messages[3].content.ends_with("Answer:"));
}

TEST(AssemblePrompt, MessageOrderAndWording) {
    const auto b = assemble_prompt("Does it apply?", x_hits({3}), {}, kXCounter);
    ASSERT_EQ(b.messages.size(), 4u);
    const std::string analyst =
        "You are a helpful policy analyst working to understand the UN Biodiversity Beyond National Borders Agreement.";
    EXPECT_EQ(b.messages[0].content, analyst);
    EXPECT_EQ(b.messages[1].content, analyst);
    EXPECT_NE(b.messages[2].content.find("From document \"Title d\":\nxxx\n\n"), std::string::npos);
    EXPECT_TRUE(b.messages[3].content.starts_with(
        "From information in the preceding paragraphs, please try to answer the following question. There are several "
        "drafts of the agreement leading up to the final version; please assume the question refers to the final draft "
        "unless otherwise specified."));
    for (const auto& m : b.messages) EXPECT_FALSE(m.content.empty());
}

TEST(AssemblePrompt, Errors) {
    auto code = [](auto&& fn) -> std::string {
        try {
            fn();
        } catch (const PromptError& e) {
            return e.code();
        }
        return "none";
    };
    EXPECT_EQ(code([] { assemble_prompt(" \n\t", {}); }), "empty_question");
    EXPECT_EQ(code([] { assemble_prompt("q", {}, {3000, 3500, 512}); }), "invalid_budget");
    EXPECT_EQ(code([] { assemble_prompt("q", {}, {3000, 3512, 512}); }), "invalid_budget");
    std::string huge;
    for (int i = 0; i < 3000; ++i) huge += "word ";
    EXPECT_EQ(code([&] { assemble_prompt(huge, {}); }), "question_too_long");
    EXPECT_EQ(code([] { parse_passage_order("random"); }), "invalid_template");
    EXPECT_EQ(parse_passage_order("document"), PassageOrder::document);
}

TEST(AssemblePrompt, LongQuestionShrinksRoom) {
    // 2400 words: 3200 tokens of question leaves less room than the passage budget.
    std::string q;
    for (int i = 0; i < 2400; ++i) q += "word ";
    std::mt19937_64 rng(40);
    std::vector<RetrievedPassage> hits;
    for (std::size_t i = 0; i < 10; ++i) hits.push_back({passage("d", i, testsupport::random_words(rng, 60)), 0.0});
    const auto b = assemble_prompt(q, hits);
    EXPECT_LE(b.prompt_tokens + 512, 4097u);
    EXPECT_LT(b.passage_tokens_used, 3000u);
}

TEST(PromptTemplate, ParseErrors) {
    EXPECT_THROW(PromptTemplate::parse("stray\n=== user ===\n{PASSAGES}{QUESTION}\n"), PromptError);
    EXPECT_THROW(PromptTemplate::parse("=== user ===\n{PASSAGES}\n"), PromptError);
    EXPECT_THROW(PromptTemplate::parse("=== user ===\n{PASSAGES}{PASSAGES}{QUESTION}\n"), PromptError);
    EXPECT_THROW(PromptTemplate::parse("=== robot ===\n{PASSAGES}{QUESTION}\n"), PromptError);
    const auto t = PromptTemplate::parse("=== system ===\nS\n=== user ===\nA\n\n{PASSAGES}\n=== user ===\nQ {QUESTION}\n");
    ASSERT_EQ(t.messages().size(), 3u);
    EXPECT_EQ(t.messages()[1].content, "A\n\n{PASSAGES}");
}

TEST(PromptTemplate, CompiledCopyMatchesShippedFile) {
    const auto from_file = PromptTemplate::parse(template_file());
    EXPECT_EQ(from_file.messages(), PromptTemplate::builtin().messages());
}

TEST(PromptTemplate, CustomTemplateIsUsed) {
    const auto t = PromptTemplate::parse("=== user ===\nP:{PASSAGES}|Q:{QUESTION}\n");
    AssemblyOptions opts;
    opts.prompt_template = &t;
    const auto b = assemble_prompt("why", x_hits({2}), {}, kXCounter, opts);
    ASSERT_EQ(b.messages.size(), 1u);
    EXPECT_EQ(b.messages[0].content, "P:From document \"Title d\":\nxx\n\n|Q:why");
}

TEST(AssemblePrompt, DocumentOrderGroupsByBestHit) {
    std::vector<RetrievedPassage> hits{{passage("b", 5, "b5"), 0.1}, {passage("a", 2, "a2"), 0.2},
                                       {passage("b", 1, "b1"), 0.3}, {passage("a", 0, "a0"), 0.4}};
    AssemblyOptions opts;
    opts.order = PassageOrder::document;
    const auto b = assemble_prompt("q", hits, {}, TokenCounter::word_ratio(), opts);
    EXPECT_EQ(b.included_passage_ids(), (std::vector<std::string>{"b:1", "b:5", "a:0", "a:2"}));
    const auto rel = assemble_prompt("q", hits);
    EXPECT_EQ(rel.included_passage_ids(), (std::vector<std::string>{"b:5", "a:2", "b:1", "a:0"}));
}

TEST(AssemblePrompt, FixtureGolden) {
    auto engine = testsupport::fixture_engine();
    const auto prepared = engine->prepare(testsupport::fixture_question(), {});
    const auto rendered = render_bundle(prepared.bundle);
    EXPECT_EQ(rendered, testsupport::slurp(testsupport::kGolden / "fixture-question.prompt.txt"));
    EXPECT_LE(prepared.bundle.passage_tokens_used, 3000u);
    EXPECT_LE(prepared.bundle.prompt_tokens + 512, 4097u);
    EXPECT_EQ(masked(prepared.bundle, testsupport::fixture_question()), template_file());
}

// Budget safety, order preservation, template immutability and an
// independent greedy replay over random hit lists and budgets.
TEST(PromptProperties, RandomAssemblies) {
    std::mt19937_64 rng(41);
    const auto tmpl_text = template_file();
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<RetrievedPassage> hits;
        const std::size_t n = testsupport::uniform(rng, 0, 30);
        for (std::size_t i = 0; i < n; ++i) {
            const auto doc = "doc" + std::to_string(testsupport::uniform(rng, 0, 4));
            std::vector<std::string> heads;
            for (std::size_t h = testsupport::uniform(rng, 0, 2); h > 0; --h) heads.push_back("Article " + std::to_string(h));
            hits.push_back({passage(doc, i, testsupport::random_words(rng, testsupport::uniform(rng, 1, 400)), heads),
                            static_cast<double>(i) / 100.0});
        }
        PromptBudget budget;
        budget.context_limit = testsupport::uniform(rng, 1200, 8000);
        budget.answer_reserve = testsupport::uniform(rng, 100, 700);
        budget.passage_budget = testsupport::uniform(rng, 1, budget.context_limit - budget.answer_reserve - 1);
        const std::string question = testsupport::random_words(rng, testsupport::uniform(rng, 1, 40)) + "?";

        const auto b = assemble_prompt(question, hits, budget);
        std::size_t sum = 0;
        for (const auto& p : b.packed) sum += oracle::tokens(p.flattened);
        ASSERT_EQ(sum, b.passage_tokens_used);
        ASSERT_LE(b.passage_tokens_used, budget.passage_budget);
        std::size_t total = 0;
        for (const auto& m : b.messages) total += oracle::tokens(m.content);
        ASSERT_EQ(total, b.prompt_tokens);
        ASSERT_LE(total + budget.answer_reserve, budget.context_limit);
        ASSERT_TRUE(is_subsequence(b.included_passage_ids(), hits));
        ASSERT_EQ(b.no_passages_fit, b.packed.empty());
        ASSERT_EQ(masked(b, question), tmpl_text) << trial;

        // Replay: fixed cost counted on the template with no passages.
        std::size_t fixed = 0;
        for (const auto& m : PromptTemplate::builtin().render("", question)) fixed += oracle::tokens(m.content);
        std::size_t remaining = std::min(budget.passage_budget, budget.context_limit - budget.answer_reserve - fixed);
        std::vector<std::string> expect;
        for (const auto& h : hits) {
            const auto cost = oracle::tokens(flatten_passage(h.passage));
            if (cost <= remaining) {
                remaining -= cost;
                expect.push_back(h.passage.id);
            }
        }
        ASSERT_EQ(b.included_passage_ids(), expect) << trial;
    }
}

TEST(PromptProperties, NonSubadditiveCounterStillFitsWindow) {
    // Charges an extra token per newline, so whole messages cost more than
    // their parts; shedding must keep the window.
    const TokenCounter lumpy{"lumpy", [](std::string_view t) {
                                 std::size_t n = default_token_count(t);
                                 for (char c : t) n += c == '\n' ? 3 : 0;
                                 return n;
                             }};
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<RetrievedPassage> hits;
        for (std::size_t i = 0; i < 20; ++i) hits.push_back({passage("d", i, testsupport::random_words(rng, 80)), 0.0});
        PromptBudget budget{testsupport::uniform(rng, 100, 1500), 1700, 200};
        const auto b = assemble_prompt("q", hits, budget, lumpy);
        ASSERT_LE(b.passage_tokens_used, budget.passage_budget);
        ASSERT_LE(b.prompt_tokens + budget.answer_reserve, budget.context_limit);
        ASSERT_EQ(count_prompt_tokens(b.messages, lumpy), b.prompt_tokens);
    }
}
