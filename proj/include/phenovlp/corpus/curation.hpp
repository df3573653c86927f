#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phenovlp/corpus/matching.hpp"
#include "phenovlp/corpus/model_clients.hpp"
#include "phenovlp/corpus/records.hpp"
#include "phenovlp/corpus/subfigure.hpp"

namespace phenovlp::corpus {

struct SubCaption {
    std::string key;  // "A", "B", ... or "main"
    std::string caption;
    std::string modality;
    bool operator==(const SubCaption&) const = default;
};

struct RefinedCaptions {
    std::vector<SubCaption> parts;
    bool fallback = false;  // parts is the original caption under "main"
    std::string reason;     // why the fallback happened
};

// Parses the refiner's JSON object of {key: {enhanced_caption, modality}}.
// Throws InputError on anything else.
std::vector<SubCaption> parse_refined_captions(const std::string& response);

// Asks the refiner for per-panel captions. A malformed answer is retried once;
// a second malformed answer or a transport failure falls back to the original
// caption. Captions are cut to `max_tokens` tokens.
RefinedCaptions refine_captions(const TextRefiner& llm, const std::string& caption,
                                const std::vector<std::string>& ref_paragraphs, std::size_t max_tokens = 256);

struct AlignedSubfigure {
    SubfigureBox box;
    SubCaption caption;
};

struct Alignment {
    bool compound = true;  // keep the whole figure with its whole caption
    std::vector<AlignedSubfigure> parts;
    std::string reason;  // set when compound
};

// The "(key) caption" lines handed to the aligner.
std::string caption_block(const std::vector<SubCaption>& subcaptions);

// Bijective box-to-caption mapping or the compound fallback. A single box
// with a single caption aligns without asking the aligner.
Alignment align_subfigures(const vision::Image& figure, const std::vector<SubfigureBox>& boxes,
                           const std::vector<SubCaption>& subcaptions, const VisionAligner& aligner);

// One image-caption candidate before phenotype assignment.
struct CandidatePair {
    std::string pmcid;
    std::string figure_id;
    std::optional<int> subfigure_index;  // 1-based box number; absent for whole figures
    std::string caption;
    std::optional<std::string> modality;
    std::vector<ontology::TermId> parent_term_ids;
};

struct IntegrationContext {
    KeywordMatcher matcher;
    std::set<ontology::TermId> terminals;

    explicit IntegrationContext(const ontology::PhenotypeGraph& graph);
};

std::string pair_id_for(const std::string& pmcid, const std::string& figure_id, std::optional<int> subfigure_index);

struct IntegrationResult {
    std::vector<ImageCaptionPair> pairs;
    std::size_t dropped = 0;
};

// Subfigure captions keep the parent phenotypes whose keywords they still
// mention; when none remain they inherit every parent phenotype, or are
// dropped under `strict_keywords`. Whole figures keep the parent phenotypes.
// Image refs point at images/<pair_id>.png.
IntegrationResult integrate(const std::vector<CandidatePair>& candidates, const IntegrationContext& context,
                            bool strict_keywords = false);

}  // namespace phenovlp::corpus
