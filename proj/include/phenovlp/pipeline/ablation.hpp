#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "phenovlp/knowledge/trainer.hpp"
#include "phenovlp/pipeline/config.hpp"

namespace phenovlp::pipeline {

struct AblationCell {
    std::string init;           // scratch | pretrained
    std::string kd;             // on | off
    std::string curation;       // on | off
    std::string kg_components;  // full | no-def | no-syn | no-rel

    // Directory-safe name, e.g. "init-pretrained_kd-on_curation-off_kg-full".
    std::string label() const;
    // `base` with the cell's switches applied and output_root under `root`.
    RunConfig apply(const RunConfig& base, const std::filesystem::path& root) const;
};

// Axis values; an empty axis stays at the base config's setting.
struct AblationGrid {
    std::vector<std::string> init;
    std::vector<std::string> kd;
    std::vector<std::string> curation;
    std::vector<std::string> kg_components;

    // "kd=on,off;curation=on,off". Unknown axes or values are InputErrors.
    static AblationGrid parse(const std::string& spec);
    // Cross product with init outermost and kg_components innermost.
    std::vector<AblationCell> cells(const RunConfig& base) const;
};

struct AblationRow {
    AblationCell cell;
    std::map<std::string, double> metrics;
};

struct AblationTable {
    std::vector<std::string> metric_columns;
    std::vector<AblationRow> rows;

    // init,kd,curation,kg_components then the metric columns; missing values
    // are empty fields.
    std::string to_csv() const;
};

using AblationBatchHook = std::function<void(const AblationCell&, long step, const knowledge::KnowledgeBatch&)>;

// One full pipeline run per cell under out_dir/<cell label>, all with the base
// seed. Writes out_dir/ablation.csv.
AblationTable run_ablations(const RunConfig& base, const AblationGrid& grid, const std::filesystem::path& out_dir,
                            const AblationBatchHook& hook = {});

}  // namespace phenovlp::pipeline
