#include "phenovlp/pipeline/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/hash.hpp"
#include "phenovlp/common/text.hpp"
#include "phenovlp/corpus/pipeline.hpp"
#include "phenovlp/eval/metrics.hpp"
#include "phenovlp/knowledge/text_encoder.hpp"
#include "phenovlp/knowledge/trainer.hpp"
#include "phenovlp/vision/encoder.hpp"
#include "phenovlp/vlp/trainer.hpp"

namespace phenovlp::pipeline {

namespace fs = std::filesystem;

namespace {

std::string real_text(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    // Keep reals recognisable as reals: 1 -> 1.0, but leave 1e-05 alone.
    if (s.find_first_of(".einf") == std::string::npos) s += ".0";
    return s;
}

std::string bool_text(bool v) { return v ? "true" : "false"; }

std::string list_text(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string section_of(std::string_view name) {
    const auto dot = name.find('.');
    return dot == std::string_view::npos ? std::string() : std::string(name.substr(0, dot));
}

std::string key_of(std::string_view name) {
    const auto dot = name.find('.');
    return std::string(dot == std::string_view::npos ? name : name.substr(dot + 1));
}

long parse_long(std::string_view s) {
    long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("integer");
    return v;
}

double parse_real(std::string_view s) {
    double v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) throw std::invalid_argument("real");
    return v;
}

// Canonical spelling of `value` for `type`; throws std::invalid_argument.
std::string canonical(ValueType type, std::string_view value) {
    const std::string v = text::trim(value);
    switch (type) {
        case ValueType::integer:
            return std::to_string(parse_long(v));
        case ValueType::real:
            return real_text(parse_real(v));
        case ValueType::boolean: {
            const auto f = text::fold_case(v);
            if (f == "true" || f == "on" || f == "yes" || f == "1") return "true";
            if (f == "false" || f == "off" || f == "no" || f == "0") return "false";
            throw std::invalid_argument("boolean");
        }
        case ValueType::text:
        case ValueType::path:
            return v;
        case ValueType::int_list: {
            std::vector<int> out;
            if (!v.empty())
                for (const auto& part : text::split(v, ',')) out.push_back(static_cast<int>(parse_long(text::trim(part))));
            return list_text(out);
        }
    }
    throw std::invalid_argument("type");
}

std::string_view type_name(ValueType type) {
    switch (type) {
        case ValueType::integer: return "an integer";
        case ValueType::real: return "a number";
        case ValueType::boolean: return "a boolean";
        case ValueType::text: return "text";
        case ValueType::path: return "a path";
        case ValueType::int_list: return "a comma-separated integer list";
    }
    return "a value";
}

std::vector<ConfigKey> build_schema() {
    using V = ValueType;
    const corpus::CurateOptions curate;
    const knowledge::TextEncoderConfig text_cfg;
    const vision::VisionEncoderConfig vision_cfg;
    const knowledge::KnowledgeTrainConfig kg;
    const vlp::VLPTrainConfig vl;
    const eval::ProbeOptions probe;
    return {
        {"seed", V::integer, "0"},
        {"output_root", V::path, "runs/default"},

        {"ontology.obo", V::path, ""},

        {"curate.corpus", V::path, ""},
        {"curate.keep_list", V::path, ""},
        {"curate.cluster_model", V::path, ""},
        {"curate.mock_llm", V::boolean, "false"},
        {"curate.cluster_filter", V::boolean, bool_text(curate.cluster_filter)},
        {"curate.k1", V::integer, std::to_string(curate.k1)},
        {"curate.k2", V::integer, std::to_string(curate.k2)},
        {"curate.split", V::boolean, bool_text(curate.split)},
        {"curate.detector_threshold", V::real, real_text(curate.detector_threshold)},
        {"curate.max_caption_tokens", V::integer, std::to_string(curate.max_caption_tokens)},
        {"curate.strict_keywords", V::boolean, bool_text(curate.strict_keywords)},
        {"curate.workers", V::integer, std::to_string(curate.workers)},
        {"curate.embedder_dim", V::integer, "16"},

        {"split.holdout", V::text, ""},
        {"split.holdout_fraction", V::real, "0.2"},

        {"text.vocab_size", V::integer, std::to_string(text_cfg.vocab_size)},
        {"text.model_dim", V::integer, std::to_string(text_cfg.model_dim)},
        {"text.heads", V::integer, std::to_string(text_cfg.heads)},
        {"text.layers", V::integer, std::to_string(text_cfg.layers)},
        {"text.hidden_dim", V::integer, std::to_string(text_cfg.hidden_dim)},
        {"text.embed_dim", V::integer, std::to_string(text_cfg.embed_dim)},
        {"text.max_tokens", V::integer, std::to_string(text_cfg.max_tokens)},

        {"vision.image_size", V::integer, std::to_string(vision_cfg.image_size)},
        {"vision.channels", V::int_list, list_text(vision_cfg.channels)},
        {"vision.strides", V::int_list, list_text(vision_cfg.strides)},
        {"vision.embed_dim", V::integer, std::to_string(vision_cfg.embed_dim)},

        {"knowledge.batch_phenotypes", V::integer, std::to_string(kg.batch_phenotypes)},
        {"knowledge.temperature", V::real, real_text(kg.temperature)},
        {"knowledge.learning_rate", V::real, real_text(kg.learning_rate)},
        {"knowledge.weight_decay", V::real, real_text(kg.weight_decay)},
        {"knowledge.epochs", V::integer, std::to_string(kg.epochs)},
        {"knowledge.terminal_only", V::boolean, bool_text(kg.terminal_only)},
        {"knowledge.kg_components", V::text, kg.kg_components},
        {"knowledge.max_steps", V::integer, std::to_string(kg.max_steps)},

        {"vlp.init", V::text, "pretrained"},
        {"vlp.batch_size", V::integer, std::to_string(vl.batch_size)},
        {"vlp.alpha", V::real, real_text(vl.alpha)},
        {"vlp.tau_m", V::real, real_text(vl.tau_m)},
        {"vlp.tau_kd", V::real, real_text(vl.tau_kd)},
        {"vlp.learning_rate", V::real, real_text(vl.learning_rate)},
        {"vlp.weight_decay", V::real, real_text(vl.weight_decay)},
        {"vlp.warmup_steps", V::integer, std::to_string(vl.warmup_steps)},
        {"vlp.epochs", V::integer, std::to_string(vl.epochs)},
        {"vlp.kd_enabled", V::boolean, bool_text(vl.kd_enabled)},
        {"vlp.learnable_temperature", V::boolean, bool_text(vl.learnable_temperature)},
        {"vlp.max_steps", V::integer, std::to_string(vl.max_steps)},

        {"eval.ks", V::int_list, "1,5,10"},
        {"eval.templates", V::path, ""},
        {"eval.probe_ratio", V::real, "1.0"},
        {"eval.probe_weight_decay", V::real, real_text(probe.weight_decay)},
        {"eval.probe_max_steps", V::integer, std::to_string(probe.max_steps)},
        {"eval.matching_k", V::integer, "0"},
        {"eval.macro", V::boolean, "false"},
    };
}

const ConfigKey* find_key(std::string_view name) {
    for (const auto& k : config_schema())
        if (k.name == name) return &k;
    return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = build_schema();
    return schema;
}

RunConfig::RunConfig() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
}

void RunConfig::set(std::string_view name, std::string_view value) {
    const auto* key = find_key(name);
    if (!key) throw InputError("unknown config key '" + std::string(name) + "'");
    try {
        values_[key->name] = canonical(key->type, value);
    } catch (const std::invalid_argument&) {
        throw InputError("config key '" + key->name + "' expects " + std::string(type_name(key->type)) + ", got '" +
                         std::string(value) + "'");
    }
}

void RunConfig::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw InputError("override '" + std::string(assignment) + "' is not key=value");
    const std::string name = text::trim(assignment.substr(0, eq));
    std::string value = text::trim(assignment.substr(eq + 1));
    const auto* key = find_key(name);
    if (key && key->type == ValueType::path && !value.empty() && fs::path(value).is_relative())
        value = (fs::current_path() / value).lexically_normal().string();
    set(name, value);
}

RunConfig RunConfig::parse(std::istream& in, const fs::path& base_dir) {
    RunConfig cfg;
    cfg.base_dir_ = base_dir;
    std::string section, line;
    std::set<std::string> seen;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = text::trim(line);
        const auto where = "config line " + std::to_string(n) + ": ";
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw InputError(where + "unterminated section header");
            section = text::trim(std::string_view(t).substr(1, t.size() - 2));
            bool known = false;
            for (const auto& k : config_schema()) known = known || section_of(k.name) == section;
            if (!known) throw InputError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw InputError(where + "expected key = value");
        const std::string key = text::trim(std::string_view(t).substr(0, eq));
        const std::string name = section.empty() ? key : section + "." + key;
        if (!seen.insert(name).second) throw InputError(where + "duplicate key '" + name + "'");
        try {
            cfg.set(name, std::string_view(t).substr(eq + 1));
        } catch (const InputError& e) {
            throw InputError(where + e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::parse_string(const std::string& text, const fs::path& base_dir) {
    std::istringstream in(text);
    return parse(in, base_dir);
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read config " + path.string());
    return parse(in, fs::absolute(path).parent_path());
}

std::string RunConfig::serialize() const {
    std::string out, current;
    for (const auto& k : config_schema()) {
        const auto section = section_of(k.name);
        if (section != current) {
            out += "\n[" + section + "]\n";
            current = section;
        }
        out += key_of(k.name) + " = " + values_.at(k.name) + "\n";
    }
    return out;
}

std::string RunConfig::section_hash(std::string_view section) const {
    std::string block;
    for (const auto& k : config_schema())
        if (section_of(k.name) == section) block += k.name + "=" + values_.at(k.name) + "\n";
    return hex64(fnv1a(block));
}

const std::string& RunConfig::raw(std::string_view name, ValueType expected) const {
    const auto* key = find_key(name);
    if (!key) throw InvariantError("unknown config key '" + std::string(name) + "'");
    if (key->type != expected) throw InvariantError("config key '" + key->name + "' read with the wrong type");
    return values_.find(name)->second;
}

long RunConfig::get_int(std::string_view name) const { return parse_long(raw(name, ValueType::integer)); }

double RunConfig::get_real(std::string_view name) const { return parse_real(raw(name, ValueType::real)); }

bool RunConfig::get_bool(std::string_view name) const { return raw(name, ValueType::boolean) == "true"; }

const std::string& RunConfig::get_text(std::string_view name) const { return raw(name, ValueType::text); }

fs::path RunConfig::get_path(std::string_view name) const {
    const auto& v = raw(name, ValueType::path);
    if (v.empty()) return {};
    const fs::path p(v);
    return p.is_absolute() || base_dir_.empty() ? p : (base_dir_ / p).lexically_normal();
}

std::vector<int> RunConfig::get_int_list(std::string_view name) const {
    std::vector<int> out;
    const auto& v = raw(name, ValueType::int_list);
    if (!v.empty())
        for (const auto& part : text::split(v, ',')) out.push_back(static_cast<int>(parse_long(part)));
    return out;
}

}  // namespace phenovlp::pipeline
