#include <random>

#include <gtest/gtest.h>

#include "ragqa/corpus.hpp"
#include "test_support.hpp"

using namespace ragqa;

namespace {

CorpusError parse_error(std::string_view raw) {
    try {
        parse_structured_document(raw);
    } catch (const CorpusError& e) {
        return e;
    }
    ADD_FAILURE() << "expected CorpusError for: " << raw;
    return CorpusError(CorpusError::Kind::malformed_format, "none");
}

} // namespace

TEST(ParseStructured, EchoesSectionsAndParagraphs) {
    const auto doc = parse_structured_document(R"({"id":"d","title":"T","sections":[
        {"heading_path":["Part I"],"paragraphs":[{"text":"a b"},{"text":"c"}]}]})");
    EXPECT_EQ(doc.id, "d");
    EXPECT_EQ(doc.title, "T");
    ASSERT_EQ(doc.sections.size(), 1u);
    EXPECT_EQ(doc.sections[0].heading_path, std::vector<std::string>{"Part I"});
    ASSERT_EQ(doc.sections[0].paragraphs.size(), 2u);
    EXPECT_EQ(doc.sections[0].paragraphs[0].text, "a b");
    EXPECT_EQ(doc.sections[0].paragraphs[1].text, "c");
    EXPECT_EQ(doc.sections[0].paragraphs[0].kind, ParagraphKind::prose);
}

TEST(ParseStructured, NormalizesWhitespace) {
    const auto doc = parse_structured_document(
        R"({"id":"d","title":"  T\t x ","sections":[{"paragraphs":[{"text":"  a   b\n"}]}]})");
    EXPECT_EQ(doc.title, "T x");
    EXPECT_EQ(doc.sections[0].paragraphs[0].text, "a b");
    EXPECT_TRUE(doc.sections[0].heading_path.empty());
}

TEST(ParseStructured, MissingTitleIsMalformed) {
    const auto e = parse_error(R"({"id":"d","sections":[]})");
    EXPECT_EQ(e.kind(), CorpusError::Kind::malformed_format);
    EXPECT_EQ(e.code(), "malformed_format");
}

TEST(ParseStructured, BlankTitleIsEmptyDocument) {
    const auto e = parse_error(R"({"id":"d","title":"   ","sections":[]})");
    EXPECT_EQ(e.kind(), CorpusError::Kind::empty_document);
}

TEST(ParseStructured, SyntaxErrorReportsPosition) {
    const auto e = parse_error("{\n  \"id\": \"d\",\n  \"title\": oops\n}");
    EXPECT_EQ(e.kind(), CorpusError::Kind::malformed_format);
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GT(e.column(), 0u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
}

TEST(ParseStructured, RejectsBadShapes) {
    EXPECT_EQ(parse_error(R"([1,2])").kind(), CorpusError::Kind::malformed_format);
    EXPECT_EQ(parse_error(R"({"id":"d","title":"T","sections":{}})").kind(), CorpusError::Kind::malformed_format);
    EXPECT_EQ(parse_error(R"({"id":"d","title":"T","sections":[{"paragraphs":[{"text":1}]}]})").kind(),
              CorpusError::Kind::malformed_format);
    EXPECT_EQ(parse_error(R"({"id":"d","title":"T","sections":[{"heading_path":[""],"paragraphs":[]}]})").kind(),
              CorpusError::Kind::malformed_format);
    EXPECT_EQ(parse_error(R"({"id":"d","title":"T","sections":[{"paragraphs":[{"text":"x","kind":"table"}]}]})").kind(),
              CorpusError::Kind::malformed_format);
    EXPECT_EQ(parse_error(R"({"title":"T","sections":[]})").kind(), CorpusError::Kind::malformed_format);
}

TEST(ParseStructured, IdArgumentOverridesField) {
    const auto doc = parse_structured_document(R"({"id":"inner","title":"T","sections":[]})", "outer");
    EXPECT_EQ(doc.id, "outer");
    const auto no_field = parse_structured_document(R"({"title":"T","sections":[]})", "given");
    EXPECT_EQ(no_field.id, "given");
}

TEST(ParseStructured, ListItemKindAndDroppedBlankParagraphs) {
    const auto doc = parse_structured_document(R"({"id":"d","title":"T","sections":[{"paragraphs":[
        {"text":"(a) first","kind":"list_item"},{"text":"   "},{"text":"after"}]}]})");
    ASSERT_EQ(doc.sections[0].paragraphs.size(), 2u);
    EXPECT_EQ(doc.sections[0].paragraphs[0].kind, ParagraphKind::list_item);
    EXPECT_EQ(doc.sections[0].paragraphs[1].text, "after");
}

TEST(ParseStructured, FixtureCorpusLoads) {
    const auto docs = testsupport::fixture_documents();
    ASSERT_EQ(docs.size(), 4u);
    for (const auto& d : docs) {
        EXPECT_FALSE(d.title.empty());
        EXPECT_GT(d.paragraph_count(), 0u);
    }
}

TEST(ParsePlainText, HeadingOpensSection) {
    const auto doc = parse_plain_text("PART I\n\npara one\n\npara two", "T", "d");
    ASSERT_EQ(doc.sections.size(), 1u);
    EXPECT_EQ(doc.sections[0].heading_path, std::vector<std::string>{"PART I"});
    ASSERT_EQ(doc.sections[0].paragraphs.size(), 2u);
    EXPECT_EQ(doc.sections[0].paragraphs[0].text, "para one");
    EXPECT_EQ(doc.sections[0].paragraphs[1].text, "para two");
}

TEST(ParsePlainText, FrontMatterThenArticle) {
    const auto doc = parse_plain_text("intro\n\nArticle 7\n\nbody", "T", "d");
    ASSERT_EQ(doc.sections.size(), 2u);
    EXPECT_TRUE(doc.sections[0].heading_path.empty());
    ASSERT_EQ(doc.sections[0].paragraphs.size(), 1u);
    EXPECT_EQ(doc.sections[0].paragraphs[0].text, "intro");
    EXPECT_EQ(doc.sections[1].heading_path, std::vector<std::string>{"Article 7"});
    ASSERT_EQ(doc.sections[1].paragraphs.size(), 1u);
    EXPECT_EQ(doc.sections[1].paragraphs[0].text, "body");
}

TEST(ParsePlainText, EmptyInputIsEmptyDocument) {
    try {
        parse_plain_text("", "T", "d");
        FAIL() << "expected empty_document";
    } catch (const CorpusError& e) {
        EXPECT_EQ(e.kind(), CorpusError::Kind::empty_document);
    }
    EXPECT_THROW(parse_plain_text(" \n\n\t", "T", "d"), CorpusError);
}

TEST(ParsePlainText, HeadingHeuristic) {
    EXPECT_TRUE(looks_like_heading("PART II MARINE GENETIC RESOURCES"));
    EXPECT_TRUE(looks_like_heading("Article 14 Fair and equitable sharing"));
    EXPECT_TRUE(looks_like_heading("Part iv Environmental impact assessments"));
    EXPECT_TRUE(looks_like_heading("2.1 Scope"));
    EXPECT_FALSE(looks_like_heading("The Parties to this Agreement,"));
    EXPECT_FALSE(looks_like_heading("Partial agreement was reached"));
    EXPECT_FALSE(looks_like_heading("ARTICLE ONE TWO THREE FOUR FIVE SIX SEVEN EIGHT NINE TEN ELEVEN TWELVE"));
    EXPECT_TRUE(looks_like_list_item("(a) The polluter-pays principle;"));
    EXPECT_TRUE(looks_like_list_item("- item"));
    EXPECT_FALSE(looks_like_list_item("plain sentence"));
}

TEST(ParsePlainText, MultiLineBlocksJoinAndListItemsAreTagged) {
    const auto doc = parse_plain_text("Article 1\nfirst line\nsecond line\n\n(a) item text", "T", "d");
    ASSERT_EQ(doc.sections.size(), 1u);
    ASSERT_EQ(doc.sections[0].paragraphs.size(), 2u);
    EXPECT_EQ(doc.sections[0].paragraphs[0].text, "first line second line");
    EXPECT_EQ(doc.sections[0].paragraphs[1].kind, ParagraphKind::list_item);
}

// Serializing and re-parsing gives a structurally equal document.
TEST(CorpusProperties, RoundTrip) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const auto doc = testsupport::random_document(rng, "doc-" + std::to_string(i));
        EXPECT_EQ(parse_structured_document(serialize_document(doc)), doc);
        EXPECT_EQ(parse_structured_document(serialize_document(doc, -1)), doc);
    }
    for (const auto& doc : testsupport::fixture_documents()) EXPECT_EQ(parse_structured_document(serialize_document(doc)), doc);
}

// Paragraph texts equal the normalized input payloads, in order.
TEST(CorpusProperties, TextConservation) {
    std::mt19937_64 rng(12);
    const char* spaces[] = {" ", "  ", "\t", "\n", " \r\n "};
    for (int trial = 0; trial < 200; ++trial) {
        nlohmann::json root{{"id", "d"}, {"title", "T"}, {"sections", nlohmann::json::array()}};
        std::string expected;
        const std::size_t nsec = testsupport::uniform(rng, 1, 4);
        for (std::size_t s = 0; s < nsec; ++s) {
            nlohmann::json paras = nlohmann::json::array();
            const std::size_t np = testsupport::uniform(rng, 1, 5);
            for (std::size_t p = 0; p < np; ++p) {
                std::string raw, norm;
                const std::size_t nw = testsupport::uniform(rng, 0, 8);
                raw += spaces[testsupport::uniform(rng, 0, 4)];
                for (std::size_t w = 0; w < nw; ++w) {
                    const auto word = testsupport::random_words(rng, 1);
                    raw += word;
                    raw += spaces[testsupport::uniform(rng, 0, 4)];
                    if (!norm.empty()) norm += ' ';
                    norm += word;
                }
                paras.push_back({{"text", raw}});
                expected += norm;
            }
            root["sections"].push_back({{"paragraphs", paras}});
        }
        const auto doc = document_from_json(root);
        std::string got;
        for (const auto& s : doc.sections)
            for (const auto& p : s.paragraphs) {
                EXPECT_FALSE(p.text.empty());
                EXPECT_EQ(p.text, normalize_whitespace(p.text));
                got += p.text;
            }
        EXPECT_EQ(got, expected);
    }
}
