#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phenovlp/corpus/records.hpp"
#include "phenovlp/ontology/graph.hpp"

namespace phenovlp::corpus {

// Case-insensitive whole-word keyword search. A keyword matches where it
// occurs in the normalised text with a non-word character (or the text edge)
// on both sides.
class KeywordMatcher {
public:
    explicit KeywordMatcher(const std::vector<ontology::Keyword>& keywords);

    // Sorted, distinct term ids whose keywords occur in `text`.
    std::vector<ontology::TermId> match(std::string_view text) const;
    std::size_t size() const { return keywords_.size(); }

private:
    std::vector<ontology::Keyword> keywords_;
    // Leading word of a keyword -> indices into keywords_.
    std::unordered_map<std::string, std::vector<std::size_t>> by_first_word_;
    // Keywords that start with a non-word character; checked by plain search.
    std::vector<std::size_t> unanchored_;
};

struct FigureMatch {
    FigureRecord figure;
    std::vector<ontology::TermId> term_ids;
};

// Figures whose caption contains at least one keyword, in article order.
std::vector<FigureMatch> match_figures(const ArticleRecord& article, const KeywordMatcher& matcher);

}  // namespace phenovlp::corpus
