#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/common/rng.hpp"

namespace phenovlp::ontology {

using TermId = std::string;

struct PhenotypeTerm {
    TermId id;
    std::string name;
    std::optional<std::string> definition;
    std::vector<std::string> synonyms;
    std::vector<TermId> parent_ids;  // is-a targets

    bool operator==(const PhenotypeTerm&) const = default;
};

// Counters collected while reading an OBO file.
struct ParseReport {
    std::size_t term_stanzas = 0;
    std::size_t obsolete_dropped = 0;
    std::size_t synonyms_skipped = 0;  // BROAD / NARROW scope
    std::size_t duplicate_parents = 0;

    json to_json() const;
};

// Immutable is-a DAG over phenotype terms. Edges point child -> parent.
// Safe for concurrent readers once built.
class PhenotypeGraph {
public:
    PhenotypeGraph() = default;

    // Validates uniqueness, references, and acyclicity. Throws StructuralError.
    static PhenotypeGraph build(std::vector<PhenotypeTerm> terms);

    const PhenotypeTerm& term(const TermId& id) const;
    bool contains(const TermId& id) const { return terms_.count(id) != 0; }

    // Ordered by term id.
    const std::map<TermId, PhenotypeTerm>& terms() const { return terms_; }
    std::size_t size() const { return terms_.size(); }
    std::size_t edge_count() const { return edge_count_; }

    // Terms that list `id` as a parent, sorted by id.
    const std::vector<TermId>& children(const TermId& id) const;

    // Exact lookup of a term by its normalized name.
    std::optional<TermId> find_by_name(std::string_view name) const;

    // Parents before children.
    std::vector<TermId> topological_order() const;

    bool operator==(const PhenotypeGraph& other) const { return terms_ == other.terms_; }

private:
    std::map<TermId, PhenotypeTerm> terms_;
    std::size_t edge_count_ = 0;
    std::map<TermId, std::vector<TermId>> reverse_index_;
    std::unordered_map<std::string, TermId> name_index_;
};

// Reads the [Term] stanzas of an OBO file (id, name, def, synonym, is_a,
// is_obsolete). Other keys and stanza types are skipped.
PhenotypeGraph parse_ontology(std::istream& source, ParseReport* report = nullptr);
PhenotypeGraph parse_ontology_file(const std::filesystem::path& path, ParseReport* report = nullptr);

// One JSON object per term: {"id","name","def","synonyms","is_a"}.
void write_graph_jsonl(const PhenotypeGraph& graph, const std::filesystem::path& path);
std::string graph_to_jsonl(const PhenotypeGraph& graph);
PhenotypeGraph read_graph_jsonl(const std::filesystem::path& path);
PhenotypeGraph graph_from_jsonl(std::istream& in);

// Leaf phenotypes: terms no other term lists as a parent.
std::set<TermId> terminal_nodes(const PhenotypeGraph& graph);

struct Keyword {
    std::string keyword;  // normalized
    TermId term_id;

    bool operator==(const Keyword&) const = default;
};

// Normalized names and synonyms of terminal terms. Deduplicated per term;
// the same string may map to several terms.
std::vector<Keyword> keyword_list(const PhenotypeGraph& graph);

enum class AttributeKind { name, definition, synonym, relation };

std::string_view to_string(AttributeKind kind);

struct AttributeText {
    TermId term_id;
    AttributeKind kind;
    std::string text;

    bool operator==(const AttributeText&) const = default;
};

// Which attribute facets are generated; the name is always present.
struct AttributeFilter {
    bool definitions = true;
    bool synonyms = true;
    bool relations = true;

    // "full", "no-def", "no-syn", "no-rel"
    static AttributeFilter from_components(std::string_view components);
};

std::string relation_sentence(std::string_view child_name, std::string_view parent_name);

// name, definition, synonyms, parent relations, child relations.
std::vector<AttributeText> attributes_of(const PhenotypeGraph& graph, const TermId& id,
                                         const AttributeFilter& filter = {});

// Two attributes drawn uniformly without replacement; a single-attribute term
// yields its only attribute twice.
std::pair<AttributeText, AttributeText> sample_attribute_pair(const PhenotypeGraph& graph,
                                                              const TermId& id, Rng& rng,
                                                              const AttributeFilter& filter = {});

}  // namespace phenovlp::ontology
