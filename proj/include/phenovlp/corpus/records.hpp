#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "phenovlp/common/jsonl.hpp"

namespace phenovlp::corpus {

struct FigureRecord {
    std::string figure_id;
    std::string image_ref;  // path relative to the corpus file's directory
    std::string caption;
    std::vector<std::string> ref_paragraphs;

    bool operator==(const FigureRecord&) const = default;
};

struct ArticleRecord {
    std::string pmcid;
    std::vector<FigureRecord> figures;

    bool operator==(const ArticleRecord&) const = default;
};

struct ImageCaptionPair {
    std::string pair_id;
    std::string pmcid;
    std::string figure_id;
    std::optional<int> subfigure_index;
    std::string image_ref;  // relative to the pairs file's directory
    std::string caption;
    std::vector<std::string> phenotype_ids;
    std::optional<std::string> modality_tag;

    bool operator==(const ImageCaptionPair&) const = default;
};

json to_json(const FigureRecord& f);
json to_json(const ArticleRecord& a);
json to_json(const ImageCaptionPair& p);
ArticleRecord article_from_json(const json& j);
ImageCaptionPair pair_from_json(const json& j);

// Validates unique pmcids and unique figure ids per article.
std::vector<ArticleRecord> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<ArticleRecord>& articles);

// Validates unique (pmcid, figure_id, subfigure_index).
std::vector<ImageCaptionPair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<ImageCaptionPair>& pairs);

}  // namespace phenovlp::corpus
