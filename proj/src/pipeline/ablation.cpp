#include "phenovlp/pipeline/ablation.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/common/text.hpp"
#include "phenovlp/pipeline/stages.hpp"

namespace phenovlp::pipeline {

namespace fs = std::filesystem;

std::string AblationCell::label() const {
    return "init-" + init + "_kd-" + kd + "_curation-" + curation + "_kg-" + kg_components;
}

RunConfig AblationCell::apply(const RunConfig& base, const fs::path& root) const {
    RunConfig c = base;
    c.set("vlp.init", init);
    c.set("vlp.kd_enabled", kd);
    c.set("curate.cluster_filter", curation);
    c.set("curate.split", curation);
    c.set("knowledge.kg_components", kg_components);
    c.set("output_root", fs::absolute(root / label()).string());
    return c;
}

AblationGrid AblationGrid::parse(const std::string& spec) {
    static const std::map<std::string, std::set<std::string>> allowed{
        {"init", {"scratch", "pretrained"}},
        {"kd", {"on", "off"}},
        {"curation", {"on", "off"}},
        {"kg_components", {"full", "no-def", "no-syn", "no-rel"}},
    };
    AblationGrid g;
    for (const auto& axis_spec : text::split(spec, ';')) {
        const auto t = text::trim(axis_spec);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw InputError("ablation axis '" + t + "' is not name=v1,v2");
        const auto axis = text::trim(std::string_view(t).substr(0, eq));
        const auto it = allowed.find(axis);
        if (it == allowed.end()) throw InputError("unknown ablation axis '" + axis + "'");
        std::vector<std::string> values;
        for (const auto& v : text::split(std::string_view(t).substr(eq + 1), ',')) {
            const auto value = text::trim(v);
            if (!it->second.count(value)) throw InputError("ablation axis " + axis + " has no value '" + value + "'");
            if (std::find(values.begin(), values.end(), value) == values.end()) values.push_back(value);
        }
        if (values.empty()) throw InputError("ablation axis " + axis + " lists no values");
        auto& slot = axis == "init" ? g.init : axis == "kd" ? g.kd : axis == "curation" ? g.curation : g.kg_components;
        if (!slot.empty()) throw InputError("ablation axis " + axis + " given twice");
        slot = std::move(values);
    }
    return g;
}

std::vector<AblationCell> AblationGrid::cells(const RunConfig& base) const {
    auto or_base = [](const std::vector<std::string>& axis, std::string fallback) {
        return axis.empty() ? std::vector<std::string>{std::move(fallback)} : axis;
    };
    const auto inits = or_base(init, base.get_text("vlp.init"));
    const auto kds = or_base(kd, base.get_bool("vlp.kd_enabled") ? "on" : "off");
    const auto curations = or_base(curation, base.get_bool("curate.cluster_filter") || base.get_bool("curate.split") ? "on" : "off");
    const auto kgs = or_base(kg_components, base.get_text("knowledge.kg_components"));
    std::vector<AblationCell> out;
    for (const auto& a : inits)
        for (const auto& b : kds)
            for (const auto& c : curations)
                for (const auto& d : kgs) out.push_back({a, b, c, d});
    return out;
}

std::string AblationTable::to_csv() const {
    std::ostringstream out;
    out.precision(6);
    out << "init,kd,curation,kg_components";
    for (const auto& c : metric_columns) out << ',' << c;
    out << '\n';
    for (const auto& r : rows) {
        out << r.cell.init << ',' << r.cell.kd << ',' << r.cell.curation << ',' << r.cell.kg_components;
        for (const auto& c : metric_columns) {
            out << ',';
            const auto it = r.metrics.find(c);
            if (it != r.metrics.end()) out << std::fixed << it->second;
        }
        out << '\n';
    }
    return out.str();
}

AblationTable run_ablations(const RunConfig& base, const AblationGrid& grid, const fs::path& out_dir,
                            const AblationBatchHook& hook) {
    AblationTable table;
    std::set<std::string> columns;
    fs::create_directories(out_dir);
    for (const auto& cell : grid.cells(base)) {
        spdlog::info("ablation cell {}", cell.label());
        PipelineHooks hooks;
        if (hook) hooks.knowledge_batch = [&](long step, const knowledge::KnowledgeBatch& b) { hook(cell, step, b); };
        const auto config = cell.apply(base, out_dir);
        run_pipeline(config, hooks);
        auto metrics = flatten_metrics(read_json(RunLayout{config.output_root()}.metrics()));
        for (const auto& [k, v] : metrics) columns.insert(k);
        table.rows.push_back({cell, std::move(metrics)});
    }
    table.metric_columns.assign(columns.begin(), columns.end());
    write_text(out_dir / "ablation.csv", table.to_csv());
    return table;
}

}  // namespace phenovlp::pipeline
