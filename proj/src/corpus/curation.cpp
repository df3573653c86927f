#include "phenovlp/corpus/curation.hpp"

#include <algorithm>
#include <map>

#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/text.hpp"
#include "phenovlp/corpus/prompts.hpp"

namespace phenovlp::corpus {

namespace {

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Numeric keys in numeric order, everything else lexicographic.
bool key_less(const std::string& a, const std::string& b) {
    if (all_digits(a) && all_digits(b) && a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

// The outermost `open`...`close` span, which drops code fences and chatter.
std::string json_span(const std::string& s, char open, char close) {
    const auto a = s.find(open);
    const auto b = s.rfind(close);
    if (a == std::string::npos || b == std::string::npos || b < a) return {};
    return s.substr(a, b - a + 1);
}

}  // namespace

std::vector<SubCaption> parse_refined_captions(const std::string& response) {
    json j;
    try {
        j = json::parse(json_span(response, '{', '}'));
    } catch (const json::exception& e) {
        throw InputError(std::string("refiner reply is not JSON: ") + e.what());
    }
    if (!j.is_object() || j.empty()) throw InputError("refiner reply is not a non-empty JSON object");
    std::vector<SubCaption> out;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_object() || !value.contains("enhanced_caption") || !value["enhanced_caption"].is_string()) {
            throw InputError("refiner entry '" + key + "' has no enhanced_caption string");
        }
        SubCaption s{key, text::trim(value["enhanced_caption"].get<std::string>()), ""};
        if (s.caption.empty()) throw InputError("refiner entry '" + key + "' is empty");
        if (value.contains("modality") && value["modality"].is_string()) s.modality = value["modality"].get<std::string>();
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(), [](const SubCaption& a, const SubCaption& b) { return key_less(a.key, b.key); });
    return out;
}

RefinedCaptions refine_captions(const TextRefiner& llm, const std::string& caption,
                                const std::vector<std::string>& ref_paragraphs, std::size_t max_tokens) {
    const std::string prompt = caption_refinement_prompt(caption, text::join(ref_paragraphs, "\n\n"));
    RefinedCaptions out;
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            out.parts = parse_refined_captions(llm.complete(prompt));
            for (auto& p : out.parts) p.caption = text::truncate_tokens(p.caption, max_tokens);
            return out;
        } catch (const TransportError& e) {
            out.reason = std::string("refiner unreachable: ") + e.what();
            break;
        } catch (const InputError& e) {
            out.reason = e.what();
        }
    }
    spdlog::info("caption refinement fell back to the original caption: {}", out.reason);
    out.fallback = true;
    out.parts = {{"main", text::truncate_tokens(caption, max_tokens), ""}};
    return out;
}

std::string caption_block(const std::vector<SubCaption>& subcaptions) {
    std::string out;
    for (const auto& s : subcaptions) {
        if (!out.empty()) out += '\n';
        out += "(" + s.key + ") " + s.caption;
    }
    return out;
}

Alignment align_subfigures(const vision::Image& figure, const std::vector<SubfigureBox>& boxes,
                           const std::vector<SubCaption>& subcaptions, const VisionAligner& aligner) {
    Alignment out;
    if (boxes.size() != subcaptions.size() || boxes.empty()) {
        out.reason = std::to_string(boxes.size()) + " boxes for " + std::to_string(subcaptions.size()) + " captions";
        return out;
    }
    if (boxes.size() == 1) {
        out.compound = false;
        out.parts.push_back({boxes[0], subcaptions[0]});
        return out;
    }

    std::string reply;
    try {
        reply = aligner.align(subfigure_alignment_prompt(caption_block(subcaptions)), render_box_overlay(figure, boxes));
    } catch (const TransportError& e) {
        out.reason = std::string("aligner unreachable: ") + e.what();
        return out;
    }

    json entries;
    try {
        entries = json::parse(json_span(reply, '[', ']'));
    } catch (const json::exception&) {
        out.reason = "aligner reply is not a JSON array";
        return out;
    }
    if (!entries.is_array() || entries.size() != boxes.size()) {
        out.reason = "aligner reply does not cover every box exactly once";
        return out;
    }

    std::map<std::string, std::size_t> box_index;
    for (std::size_t i = 0; i < boxes.size(); ++i) box_index[boxes[i].box_id] = i;
    std::vector<int> caption_of_box(boxes.size(), -1);
    std::vector<bool> caption_used(subcaptions.size(), false);
    for (const auto& e : entries) {
        if (!e.is_object() || !e.contains("bbox_id") || !e.contains("caption_chunk") || !e["bbox_id"].is_string() ||
            !e["caption_chunk"].is_string()) {
            out.reason = "aligner entry without bbox_id/caption_chunk strings";
            return out;
        }
        const auto box = box_index.find(text::trim(e["bbox_id"].get<std::string>()));
        if (box == box_index.end() || caption_of_box[box->second] >= 0) {
            out.reason = "aligner named an unknown or repeated box";
            return out;
        }
        const std::string chunk = text::normalize(e["caption_chunk"].get<std::string>());
        if (chunk == "unknown") {
            out.reason = "aligner could not place " + box->first;
            return out;
        }
        int found = -1;
        for (std::size_t c = 0; c < subcaptions.size() && found < 0; ++c) {
            const auto& s = subcaptions[c];
            if (chunk == text::normalize(s.caption) || chunk == text::normalize("(" + s.key + ") " + s.caption) ||
                chunk == text::normalize(s.key))
                found = static_cast<int>(c);
        }
        if (found < 0 || caption_used[static_cast<std::size_t>(found)]) {
            out.reason = "aligner mapping is not one-to-one";
            return out;
        }
        caption_used[static_cast<std::size_t>(found)] = true;
        caption_of_box[box->second] = found;
    }
    out.compound = false;
    for (std::size_t i = 0; i < boxes.size(); ++i)
        out.parts.push_back({boxes[i], subcaptions[static_cast<std::size_t>(caption_of_box[i])]});
    return out;
}

IntegrationContext::IntegrationContext(const ontology::PhenotypeGraph& graph)
    : matcher(ontology::keyword_list(graph)), terminals(ontology::terminal_nodes(graph)) {}

std::string pair_id_for(const std::string& pmcid, const std::string& figure_id, std::optional<int> subfigure_index) {
    std::string id = pmcid + "_" + figure_id;
    if (subfigure_index) id += "_" + std::to_string(*subfigure_index);
    return id;
}

IntegrationResult integrate(const std::vector<CandidatePair>& candidates, const IntegrationContext& context,
                            bool strict_keywords) {
    IntegrationResult out;
    for (const auto& c : candidates) {
        std::vector<ontology::TermId> ids = c.parent_term_ids;
        if (c.subfigure_index) {
            std::vector<ontology::TermId> kept;
            for (const auto& id : context.matcher.match(c.caption))
                if (std::find(c.parent_term_ids.begin(), c.parent_term_ids.end(), id) != c.parent_term_ids.end())
                    kept.push_back(id);
            if (!kept.empty()) {
                ids = std::move(kept);
            } else if (strict_keywords) {
                ids.clear();
            }
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        if (ids.empty()) {
            ++out.dropped;
            continue;
        }
        for (const auto& id : ids)
            if (!context.terminals.count(id)) throw InvariantError("phenotype " + id + " on a pair is not a terminal term");
        ImageCaptionPair p;
        p.pair_id = pair_id_for(c.pmcid, c.figure_id, c.subfigure_index);
        p.pmcid = c.pmcid;
        p.figure_id = c.figure_id;
        p.subfigure_index = c.subfigure_index;
        p.image_ref = "images/" + p.pair_id + ".png";
        p.caption = c.caption;
        p.phenotype_ids = std::move(ids);
        p.modality_tag = c.modality;
        out.pairs.push_back(std::move(p));
    }
    if (out.dropped > 0) spdlog::info("integration dropped {} pairs without phenotypes", out.dropped);
    return out;
}

}  // namespace phenovlp::corpus
