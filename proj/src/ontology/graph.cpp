#include "phenovlp/ontology/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/text.hpp"

namespace phenovlp::ontology {

namespace fs = std::filesystem;

json ParseReport::to_json() const {
    return json{{"term_stanzas", term_stanzas},
                {"obsolete_dropped", obsolete_dropped},
                {"synonyms_skipped", synonyms_skipped},
                {"duplicate_parents", duplicate_parents}};
}

namespace {

// Returns one edge (child, parent) that lies on a cycle among `remaining`.
std::pair<TermId, TermId> find_cycle_edge(const std::map<TermId, PhenotypeTerm>& terms,
                                          const std::set<TermId>& remaining) {
    // Every remaining node has a remaining parent, so walking parents from any
    // node must revisit a node.
    std::map<TermId, std::size_t> seen;
    TermId cur = *remaining.begin();
    std::vector<TermId> path;
    while (!seen.count(cur)) {
        seen[cur] = path.size();
        path.push_back(cur);
        for (const auto& p : terms.at(cur).parent_ids) {
            if (remaining.count(p)) {
                cur = p;
                break;
            }
        }
    }
    const TermId& child = path.back();
    return {child, cur};
}

}  // namespace

PhenotypeGraph PhenotypeGraph::build(std::vector<PhenotypeTerm> terms) {
    PhenotypeGraph g;
    for (auto& t : terms) {
        if (t.id.empty()) throw StructuralError("term with empty id");
        if (t.name.empty()) throw StructuralError("term " + t.id + " has an empty name");
        std::vector<TermId> parents;
        for (auto& p : t.parent_ids) {
            if (p == t.id) throw StructuralError("cycle edge " + t.id + " -> " + p);
            if (std::find(parents.begin(), parents.end(), p) == parents.end()) parents.push_back(p);
        }
        t.parent_ids = std::move(parents);
        TermId id = t.id;
        if (!g.terms_.emplace(id, std::move(t)).second) {
            throw StructuralError("duplicate term id " + id);
        }
    }

    for (const auto& [id, t] : g.terms_) {
        g.reverse_index_[id];
        for (const auto& p : t.parent_ids) {
            if (!g.terms_.count(p)) {
                throw StructuralError("term " + id + " has is_a target " + p + " which is missing");
            }
            g.reverse_index_[p].push_back(id);
            ++g.edge_count_;
        }
        g.name_index_.emplace(text::normalize(t.name), id);
    }
    // Children lists are built in id order because terms_ is ordered.

    std::map<TermId, std::size_t> pending;
    std::deque<TermId> ready;
    for (const auto& [id, t] : g.terms_) {
        pending[id] = t.parent_ids.size();
        if (t.parent_ids.empty()) ready.push_back(id);
    }
    std::size_t visited = 0;
    while (!ready.empty()) {
        TermId n = std::move(ready.front());
        ready.pop_front();
        ++visited;
        for (const auto& c : g.reverse_index_[n]) {
            if (--pending[c] == 0) ready.push_back(c);
        }
    }
    if (visited != g.terms_.size()) {
        std::set<TermId> remaining;
        for (const auto& [id, count] : pending) {
            if (count > 0) remaining.insert(id);
        }
        auto [child, parent] = find_cycle_edge(g.terms_, remaining);
        throw StructuralError("cycle edge " + child + " -> " + parent);
    }
    return g;
}

const PhenotypeTerm& PhenotypeGraph::term(const TermId& id) const {
    auto it = terms_.find(id);
    if (it == terms_.end()) throw LookupError("unknown term id " + id);
    return it->second;
}

const std::vector<TermId>& PhenotypeGraph::children(const TermId& id) const {
    auto it = reverse_index_.find(id);
    if (it == reverse_index_.end()) throw LookupError("unknown term id " + id);
    return it->second;
}

std::optional<TermId> PhenotypeGraph::find_by_name(std::string_view name) const {
    auto it = name_index_.find(text::normalize(name));
    if (it == name_index_.end()) return std::nullopt;
    return it->second;
}

std::vector<TermId> PhenotypeGraph::topological_order() const {
    std::map<TermId, std::size_t> pending;
    std::deque<TermId> ready;
    for (const auto& [id, t] : terms_) {
        pending[id] = t.parent_ids.size();
        if (t.parent_ids.empty()) ready.push_back(id);
    }
    std::vector<TermId> order;
    order.reserve(terms_.size());
    while (!ready.empty()) {
        order.push_back(ready.front());
        ready.pop_front();
        for (const auto& c : reverse_index_.at(order.back())) {
            if (--pending[c] == 0) ready.push_back(c);
        }
    }
    if (order.size() != terms_.size()) throw InvariantError("graph lost acyclicity");
    return order;
}

// --- OBO reading -----------------------------------------------------------

namespace {

// Reads a double-quoted OBO string starting at `pos`, handling backslash escapes.
std::optional<std::string> quoted_value(std::string_view line, std::size_t* end = nullptr) {
    const auto open = line.find('"');
    if (open == std::string_view::npos) return std::nullopt;
    std::string out;
    for (std::size_t i = open + 1; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '\\' && i + 1 < line.size()) {
            const char n = line[++i];
            out.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
        } else if (c == '"') {
            if (end) *end = i + 1;
            return out;
        } else {
            out.push_back(c);
        }
    }
    return std::nullopt;
}

struct Stanza {
    PhenotypeTerm term;
    bool obsolete = false;
    bool active = false;
};

}  // namespace

PhenotypeGraph parse_ontology(std::istream& source, ParseReport* report) {
    ParseReport local;
    ParseReport& rep = report ? *report : local;
    rep = ParseReport{};

    std::vector<PhenotypeTerm> terms;
    Stanza cur;
    std::size_t lineno = 0;

    auto flush = [&]() {
        if (!cur.active) return;
        if (cur.obsolete) {
            ++rep.obsolete_dropped;
        } else {
            if (cur.term.id.empty()) {
                throw InputError("[Term] stanza ending at line " + std::to_string(lineno) + " has no id");
            }
            terms.push_back(std::move(cur.term));
        }
        cur = Stanza{};
    };

    std::string raw;
    bool in_term = false;
    while (std::getline(source, raw)) {
        ++lineno;
        const std::string line = text::trim(raw);
        if (line.empty() || line[0] == '!') continue;
        if (line[0] == '[') {
            flush();
            in_term = line == "[Term]";
            if (in_term) {
                cur.active = true;
                ++rep.term_stanzas;
            }
            continue;
        }
        if (!in_term) continue;

        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = line.substr(0, colon);
        const std::string value = text::trim(std::string_view(line).substr(colon + 1));

        if (key == "id") {
            cur.term.id = value;
        } else if (key == "name") {
            cur.term.name = value;
        } else if (key == "def") {
            auto def = quoted_value(value);
            if (!def) throw InputError("line " + std::to_string(lineno) + ": malformed def");
            cur.term.definition = std::move(*def);
        } else if (key == "synonym") {
            std::size_t end = 0;
            auto syn = quoted_value(value, &end);
            if (!syn) throw InputError("line " + std::to_string(lineno) + ": malformed synonym");
            const auto rest = text::split_whitespace(std::string_view(value).substr(end));
            const std::string scope = rest.empty() ? "RELATED" : rest.front();
            if (scope == "EXACT" || scope == "RELATED") {
                cur.term.synonyms.push_back(std::move(*syn));
            } else {
                ++rep.synonyms_skipped;
            }
        } else if (key == "is_a") {
            std::string target = value.substr(0, value.find_first_of("!{"));
            target = text::trim(target);
            auto& parents = cur.term.parent_ids;
            if (std::find(parents.begin(), parents.end(), target) != parents.end()) {
                ++rep.duplicate_parents;
            } else {
                parents.push_back(std::move(target));
            }
        } else if (key == "is_obsolete") {
            cur.obsolete = value == "true";
        }
    }
    flush();
    return PhenotypeGraph::build(std::move(terms));
}

PhenotypeGraph parse_ontology_file(const fs::path& path, ParseReport* report) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open ontology " + path.string());
    return parse_ontology(in, report);
}

// --- JSONL form ------------------------------------------------------------

std::string graph_to_jsonl(const PhenotypeGraph& graph) {
    std::ostringstream out;
    for (const auto& [id, t] : graph.terms()) {
        json row{{"id", t.id},
                 {"name", t.name},
                 {"def", t.definition ? json(*t.definition) : json(nullptr)},
                 {"synonyms", t.synonyms},
                 {"is_a", t.parent_ids}};
        out << row.dump() << '\n';
    }
    return out.str();
}

void write_graph_jsonl(const PhenotypeGraph& graph, const fs::path& path) {
    write_text(path, graph_to_jsonl(graph));
}

namespace {

PhenotypeTerm term_from_json(const json& row, const std::string& where) {
    try {
        PhenotypeTerm t;
        t.id = row.at("id").get<std::string>();
        t.name = row.at("name").get<std::string>();
        if (row.contains("def") && !row["def"].is_null()) t.definition = row["def"].get<std::string>();
        if (row.contains("synonyms")) t.synonyms = row["synonyms"].get<std::vector<std::string>>();
        if (row.contains("is_a")) t.parent_ids = row["is_a"].get<std::vector<std::string>>();
        return t;
    } catch (const json::exception& e) {
        throw InputError(where + ": " + e.what());
    }
}

}  // namespace

PhenotypeGraph graph_from_jsonl(std::istream& in) {
    std::vector<PhenotypeTerm> terms;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError("graph line " + std::to_string(lineno) + ": " + e.what());
        }
        terms.push_back(term_from_json(row, "graph line " + std::to_string(lineno)));
    }
    return PhenotypeGraph::build(std::move(terms));
}

PhenotypeGraph read_graph_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open graph " + path.string());
    return graph_from_jsonl(in);
}

// --- derived views ---------------------------------------------------------

std::set<TermId> terminal_nodes(const PhenotypeGraph& graph) {
    std::set<TermId> out;
    for (const auto& [id, t] : graph.terms()) {
        if (graph.children(id).empty()) out.insert(id);
    }
    return out;
}

std::vector<Keyword> keyword_list(const PhenotypeGraph& graph) {
    std::vector<Keyword> out;
    for (const auto& id : terminal_nodes(graph)) {
        const auto& t = graph.term(id);
        std::vector<std::string> seen;
        auto add = [&](const std::string& s) {
            std::string k = text::normalize(s);
            if (k.empty() || std::find(seen.begin(), seen.end(), k) != seen.end()) return;
            seen.push_back(k);
            out.push_back({std::move(k), id});
        };
        add(t.name);
        for (const auto& s : t.synonyms) add(s);
    }
    return out;
}

std::string_view to_string(AttributeKind kind) {
    switch (kind) {
        case AttributeKind::name: return "name";
        case AttributeKind::definition: return "definition";
        case AttributeKind::synonym: return "synonym";
        case AttributeKind::relation: return "relation";
    }
    return "?";
}

AttributeFilter AttributeFilter::from_components(std::string_view components) {
    AttributeFilter f;
    if (components == "full") return f;
    if (components == "no-def") {
        f.definitions = false;
    } else if (components == "no-syn") {
        f.synonyms = false;
    } else if (components == "no-rel") {
        f.relations = false;
    } else {
        throw ParameterError("unknown kg component setting '" + std::string(components) + "'");
    }
    return f;
}

std::string relation_sentence(std::string_view child_name, std::string_view parent_name) {
    std::string s(child_name);
    s += " is a child phenotype of ";
    s += parent_name;
    return s;
}

std::vector<AttributeText> attributes_of(const PhenotypeGraph& graph, const TermId& id,
                                         const AttributeFilter& filter) {
    const auto& t = graph.term(id);
    std::vector<AttributeText> out;
    out.push_back({id, AttributeKind::name, t.name});
    if (filter.definitions && t.definition && !t.definition->empty()) {
        out.push_back({id, AttributeKind::definition, *t.definition});
    }
    if (filter.synonyms) {
        for (const auto& s : t.synonyms) {
            if (!s.empty()) out.push_back({id, AttributeKind::synonym, s});
        }
    }
    if (filter.relations) {
        for (const auto& p : t.parent_ids) {
            out.push_back({id, AttributeKind::relation, relation_sentence(t.name, graph.term(p).name)});
        }
        for (const auto& c : graph.children(id)) {
            out.push_back({id, AttributeKind::relation, relation_sentence(graph.term(c).name, t.name)});
        }
    }
    return out;
}

std::pair<AttributeText, AttributeText> sample_attribute_pair(const PhenotypeGraph& graph,
                                                              const TermId& id, Rng& rng,
                                                              const AttributeFilter& filter) {
    auto attrs = attributes_of(graph, id, filter);
    if (attrs.size() == 1) return {attrs[0], attrs[0]};
    const auto picked = rng.sample_without_replacement(attrs.size(), 2);
    return {attrs[picked[0]], attrs[picked[1]]};
}

}  // namespace phenovlp::ontology
