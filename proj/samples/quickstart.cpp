// Builds an in-memory engine over a two-section document and asks one
// question through the scripted mock backend.
#include <iostream>
#include <memory>

#include "ragqa/qa.hpp"

int main() {
    using namespace ragqa;

    const Document doc = parse_structured_document(R"({
      "id": "sample",
      "title": "Sample Agreement",
      "sections": [
        {"heading_path": ["Part I", "Article 1"],
         "paragraphs": [{"text": "This Agreement applies to areas beyond national jurisdiction."}]},
        {"heading_path": ["Part II", "Article 9"],
         "paragraphs": [{"text": "Warships are exempt from the provisions of this Agreement."}]}
      ]
    })");

    auto mock = std::make_shared<ScriptedMock>();
    mock->add_rule(ScriptedMock::Match::contains, "warships", "Warships are exempt (Article 9).");

    Engine engine(std::make_shared<HashEmbeddingProvider>(128), mock);
    engine.ingest(doc);

    const QueryResult result = engine.answer_question("Does the agreement apply to warships?");
    std::cout << result.answer << "\n\n";
    for (const auto& p : result.included_passages) std::cout << p.distance << "  " << p.flattened_text;
    return 0;
}
