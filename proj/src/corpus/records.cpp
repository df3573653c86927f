#include "phenovlp/corpus/records.hpp"

#include <set>
#include <tuple>

#include "phenovlp/common/errors.hpp"

namespace phenovlp::corpus {

namespace fs = std::filesystem;

json to_json(const FigureRecord& f) {
    return json{{"figure_id", f.figure_id}, {"image_ref", f.image_ref}, {"caption", f.caption},
                {"ref_paragraphs", f.ref_paragraphs}};
}

json to_json(const ArticleRecord& a) {
    json figs = json::array();
    for (const auto& f : a.figures) figs.push_back(to_json(f));
    return json{{"pmcid", a.pmcid}, {"figures", figs}};
}

json to_json(const ImageCaptionPair& p) {
    return json{{"pair_id", p.pair_id},
                {"pmcid", p.pmcid},
                {"figure_id", p.figure_id},
                {"subfigure_index", p.subfigure_index ? json(*p.subfigure_index) : json(nullptr)},
                {"image_ref", p.image_ref},
                {"caption", p.caption},
                {"phenotype_ids", p.phenotype_ids},
                {"modality_tag", p.modality_tag ? json(*p.modality_tag) : json(nullptr)}};
}

ArticleRecord article_from_json(const json& j) {
    ArticleRecord a;
    a.pmcid = j.at("pmcid").get<std::string>();
    for (const auto& f : j.at("figures")) {
        FigureRecord r;
        r.figure_id = f.at("figure_id").get<std::string>();
        r.image_ref = f.at("image_ref").get<std::string>();
        r.caption = f.value("caption", "");
        if (f.contains("ref_paragraphs")) r.ref_paragraphs = f.at("ref_paragraphs").get<std::vector<std::string>>();
        a.figures.push_back(std::move(r));
    }
    return a;
}

ImageCaptionPair pair_from_json(const json& j) {
    ImageCaptionPair p;
    p.pair_id = j.at("pair_id").get<std::string>();
    p.pmcid = j.at("pmcid").get<std::string>();
    p.figure_id = j.at("figure_id").get<std::string>();
    if (j.contains("subfigure_index") && !j.at("subfigure_index").is_null())
        p.subfigure_index = j.at("subfigure_index").get<int>();
    p.image_ref = j.at("image_ref").get<std::string>();
    p.caption = j.at("caption").get<std::string>();
    p.phenotype_ids = j.at("phenotype_ids").get<std::vector<std::string>>();
    if (j.contains("modality_tag") && !j.at("modality_tag").is_null())
        p.modality_tag = j.at("modality_tag").get<std::string>();
    return p;
}

std::vector<ArticleRecord> read_corpus(const fs::path& path) {
    std::vector<ArticleRecord> out;
    std::set<std::string> seen;
    read_jsonl(path, [&](const json& row, std::size_t line) {
        ArticleRecord a;
        try {
            a = article_from_json(row);
        } catch (const json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
        if (!seen.insert(a.pmcid).second) {
            throw InputError(path.string() + ":" + std::to_string(line) + ": duplicate pmcid " + a.pmcid);
        }
        std::set<std::string> figs;
        for (const auto& f : a.figures) {
            if (!figs.insert(f.figure_id).second) {
                throw InputError(path.string() + ":" + std::to_string(line) + ": duplicate figure id " + f.figure_id +
                                 " in " + a.pmcid);
            }
        }
        out.push_back(std::move(a));
    });
    return out;
}

void write_corpus(const fs::path& path, const std::vector<ArticleRecord>& articles) {
    std::vector<json> rows;
    for (const auto& a : articles) rows.push_back(to_json(a));
    write_jsonl(path, rows);
}

std::vector<ImageCaptionPair> read_pairs(const fs::path& path) {
    std::vector<ImageCaptionPair> out;
    std::set<std::tuple<std::string, std::string, int>> seen;
    read_jsonl(path, [&](const json& row, std::size_t line) {
        ImageCaptionPair p;
        try {
            p = pair_from_json(row);
        } catch (const json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
        if (p.phenotype_ids.empty()) {
            throw InputError(path.string() + ":" + std::to_string(line) + ": pair without phenotype ids");
        }
        if (!seen.insert({p.pmcid, p.figure_id, p.subfigure_index.value_or(-1)}).second) {
            throw InputError(path.string() + ":" + std::to_string(line) + ": duplicate pair " + p.pair_id);
        }
        out.push_back(std::move(p));
    });
    return out;
}

void write_pairs(const fs::path& path, const std::vector<ImageCaptionPair>& pairs) {
    std::vector<json> rows;
    rows.reserve(pairs.size());
    for (const auto& p : pairs) rows.push_back(to_json(p));
    write_jsonl(path, rows);
}

}  // namespace phenovlp::corpus
