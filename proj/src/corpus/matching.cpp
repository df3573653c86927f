#include "phenovlp/corpus/matching.hpp"

#include <algorithm>

#include "phenovlp/common/text.hpp"

namespace phenovlp::corpus {

namespace {

std::size_t word_end(std::string_view s, std::size_t from) {
    while (from < s.size() && text::is_word_char(s[from])) ++from;
    return from;
}

bool bounded_at(std::string_view hay, std::size_t pos, std::size_t len) {
    const bool left = pos == 0 || !text::is_word_char(hay[pos - 1]);
    const bool right = pos + len == hay.size() || !text::is_word_char(hay[pos + len]);
    return left && right;
}

}  // namespace

KeywordMatcher::KeywordMatcher(const std::vector<ontology::Keyword>& keywords) {
    for (const auto& k : keywords) {
        const auto norm = text::normalize(k.keyword);
        if (norm.empty()) continue;
        const std::size_t idx = keywords_.size();
        keywords_.push_back({norm, k.term_id});
        const auto first = word_end(norm, 0);
        if (first == 0) {
            unanchored_.push_back(idx);
        } else {
            by_first_word_[norm.substr(0, first)].push_back(idx);
        }
    }
}

std::vector<ontology::TermId> KeywordMatcher::match(std::string_view raw) const {
    const std::string hay = text::normalize(raw);
    std::vector<ontology::TermId> out;
    auto hit = [&](std::size_t idx) { out.push_back(keywords_[idx].term_id); };

    for (std::size_t pos = 0; pos < hay.size();) {
        if (!text::is_word_char(hay[pos])) {
            ++pos;
            continue;
        }
        const auto end = word_end(hay, pos);
        const auto it = by_first_word_.find(hay.substr(pos, end - pos));
        if (it != by_first_word_.end()) {
            for (auto idx : it->second) {
                const auto& kw = keywords_[idx].keyword;
                if (hay.compare(pos, kw.size(), kw) == 0 && bounded_at(hay, pos, kw.size())) hit(idx);
            }
        }
        pos = end;
    }
    for (auto idx : unanchored_) {
        const auto& kw = keywords_[idx].keyword;
        for (auto pos = hay.find(kw); pos != std::string::npos; pos = hay.find(kw, pos + 1)) {
            if (bounded_at(hay, pos, kw.size())) {
                hit(idx);
                break;
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<FigureMatch> match_figures(const ArticleRecord& article, const KeywordMatcher& matcher) {
    std::vector<FigureMatch> out;
    for (const auto& fig : article.figures) {
        auto ids = matcher.match(fig.caption);
        if (!ids.empty()) out.push_back({fig, std::move(ids)});
    }
    return out;
}

}  // namespace phenovlp::corpus
