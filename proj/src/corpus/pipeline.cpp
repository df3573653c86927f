#include "phenovlp/corpus/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <optional>
#include <thread>

#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"

namespace phenovlp::corpus {

namespace fs = std::filesystem;

json CurateStats::to_json() const {
    return json{{"articles", articles},
                {"figures", figures},
                {"matched_figures", matched_figures},
                {"filtered_out", filtered_out},
                {"missing_images", missing_images},
                {"compound_fallbacks", compound_fallbacks},
                {"split_figures", split_figures},
                {"dropped_pairs", dropped_pairs},
                {"pairs", pairs}};
}

namespace {

json event(std::string kind, const std::string& pmcid, const std::string& figure_id, const std::string& detail = {}) {
    json e{{"event", std::move(kind)}, {"pmcid", pmcid}, {"figure_id", figure_id}};
    if (!detail.empty()) e["detail"] = detail;
    return e;
}

struct ArticleOutput {
    std::vector<ImageCaptionPair> pairs;
    std::vector<json> audit;
    std::size_t compound_fallbacks = 0;
    std::size_t split_figures = 0;
    std::size_t dropped = 0;
};

struct FigureInput {
    const FigureRecord* figure;
    std::vector<ontology::TermId> term_ids;
    const vision::Image* image;
};

ArticleOutput process_article(const std::string& pmcid, const std::vector<FigureInput>& figures,
                              const IntegrationContext& context, const CurateBackends& backends,
                              const CurateOptions& options, const fs::path& out_dir) {
    ArticleOutput out;
    std::vector<CandidatePair> candidates;
    std::map<std::string, vision::Image> crops;  // pair id -> image
    for (const auto& in : figures) {
        const auto& fig = *in.figure;
        auto whole = [&](const std::string& why) {
            candidates.push_back({pmcid, fig.figure_id, std::nullopt, fig.caption, std::nullopt, in.term_ids});
            crops[pair_id_for(pmcid, fig.figure_id, std::nullopt)] = *in.image;
            if (!why.empty()) {
                ++out.compound_fallbacks;
                out.audit.push_back(event("compound_fallback", pmcid, fig.figure_id, why));
            }
        };
        const auto boxes = options.split ? split_compound(*in.image, backends.detector, options.detector_threshold)
                                         : std::vector<SubfigureBox>{};
        if (boxes.empty()) {
            whole({});
            continue;
        }
        const auto refined = refine_captions(backends.refiner, fig.caption, fig.ref_paragraphs, options.max_caption_tokens);
        if (refined.fallback) out.audit.push_back(event("refine_fallback", pmcid, fig.figure_id, refined.reason));
        const auto alignment = align_subfigures(*in.image, boxes, refined.parts, backends.aligner);
        if (alignment.compound) {
            whole(alignment.reason);
            continue;
        }
        ++out.split_figures;
        for (std::size_t i = 0; i < alignment.parts.size(); ++i) {
            const auto& part = alignment.parts[i];
            const int index = static_cast<int>(i) + 1;
            std::optional<std::string> modality;
            if (!part.caption.modality.empty() && part.caption.modality != "unknown") modality = part.caption.modality;
            candidates.push_back({pmcid, fig.figure_id, index, part.caption.caption, modality, in.term_ids});
            crops[pair_id_for(pmcid, fig.figure_id, index)] = vision::crop(*in.image, part.box.bounds);
        }
    }
    auto integrated = integrate(candidates, context, options.strict_keywords);
    out.dropped = integrated.dropped;
    std::set<std::string> kept;
    for (const auto& p : integrated.pairs) {
        vision::save_png(crops.at(p.pair_id), out_dir / p.image_ref);
        kept.insert(p.pair_id);
    }
    for (const auto& c : candidates) {
        const auto id = pair_id_for(c.pmcid, c.figure_id, c.subfigure_index);
        if (!kept.count(id)) out.audit.push_back(event("dropped_no_phenotype", c.pmcid, c.figure_id, id));
    }
    out.pairs = std::move(integrated.pairs);
    return out;
}

}  // namespace

CurateResult curate(const std::vector<ArticleRecord>& articles, const fs::path& corpus_dir,
                    const ontology::PhenotypeGraph& graph, const CurateBackends& backends, const CurateOptions& options,
                    const fs::path& out_dir) {
    if (options.workers < 1) throw ParameterError("curate needs at least one worker");
    CurateResult result;
    auto& stats = result.stats;
    stats.articles = articles.size();
    const IntegrationContext context(graph);

    // Load every figure once; the cluster filter is fit on all of them.
    std::vector<std::vector<std::optional<vision::Image>>> images(articles.size());
    std::vector<json> load_events;
    std::vector<std::pair<std::size_t, std::size_t>> loaded;
    for (std::size_t a = 0; a < articles.size(); ++a) {
        for (const auto& fig : articles[a].figures) {
            ++stats.figures;
            try {
                images[a].emplace_back(vision::load_image(corpus_dir / fig.image_ref));
                loaded.emplace_back(a, images[a].size() - 1);
            } catch (const InputError& e) {
                images[a].emplace_back(std::nullopt);
                ++stats.missing_images;
                load_events.push_back(event("missing_image", articles[a].pmcid, fig.figure_id, e.what()));
            }
        }
    }

    std::vector<std::vector<bool>> kept(articles.size());
    for (std::size_t a = 0; a < articles.size(); ++a) kept[a].assign(articles[a].figures.size(), !options.cluster_filter);
    if (options.cluster_filter) {
        Matrix embeddings(static_cast<Eigen::Index>(loaded.size()), backends.embedder.dim());
        for (std::size_t i = 0; i < loaded.size(); ++i)
            embeddings.row(static_cast<Eigen::Index>(i)) = backends.embedder.embed(*images[loaded[i].first][loaded[i].second]);
        if (options.cluster_model) {
            if (options.cluster_model->level1.cols() != embeddings.cols()) {
                throw ParameterError("cluster model dim differs from the image embedder dim");
            }
            result.cluster_model = *options.cluster_model;
        } else {
            Rng rng(options.seed);
            result.cluster_model = fit_cluster_filter(embeddings, options.k1, options.k2, rng);
        }
        result.cluster_model.keep_set = options.keep_set;
        for (int i : apply_cluster_filter(result.cluster_model, embeddings))
            kept[loaded[static_cast<std::size_t>(i)].first][loaded[static_cast<std::size_t>(i)].second] = true;
    }

    std::vector<std::vector<FigureInput>> work(articles.size());
    std::vector<std::vector<json>> pre_audit(articles.size());
    for (std::size_t a = 0; a < articles.size(); ++a) {
        for (const auto& m : match_figures(articles[a], context.matcher)) {
            ++stats.matched_figures;
            std::size_t f = 0;
            while (articles[a].figures[f].figure_id != m.figure.figure_id) ++f;
            if (!images[a][f]) continue;
            if (!kept[a][f]) {
                ++stats.filtered_out;
                pre_audit[a].push_back(event("cluster_filtered", articles[a].pmcid, m.figure.figure_id));
                continue;
            }
            work[a].push_back({&articles[a].figures[f], m.term_ids, &*images[a][f]});
        }
    }

    std::vector<ArticleOutput> outputs(articles.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(options.workers));
    auto worker = [&](std::size_t w) {
        try {
            for (std::size_t a = next++; a < articles.size(); a = next++)
                outputs[a] = process_article(articles[a].pmcid, work[a], context, backends, options, out_dir);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (options.workers == 1) {
        worker(0);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < options.workers; ++w) threads.emplace_back(worker, static_cast<std::size_t>(w));
        for (auto& t : threads) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    result.audit = std::move(load_events);
    for (std::size_t a = 0; a < articles.size(); ++a) {
        auto& o = outputs[a];
        result.audit.insert(result.audit.end(), pre_audit[a].begin(), pre_audit[a].end());
        result.audit.insert(result.audit.end(), o.audit.begin(), o.audit.end());
        result.pairs.insert(result.pairs.end(), std::make_move_iterator(o.pairs.begin()), std::make_move_iterator(o.pairs.end()));
        stats.compound_fallbacks += o.compound_fallbacks;
        stats.split_figures += o.split_figures;
        stats.dropped_pairs += o.dropped;
    }
    std::stable_sort(result.pairs.begin(), result.pairs.end(), [](const ImageCaptionPair& x, const ImageCaptionPair& y) {
        return std::tie(x.pmcid, x.figure_id, x.subfigure_index) < std::tie(y.pmcid, y.figure_id, y.subfigure_index);
    });
    stats.pairs = result.pairs.size();
    spdlog::info("curate: {} figures, {} matched, {} filtered, {} split, {} compound fallbacks, {} pairs", stats.figures,
                 stats.matched_figures, stats.filtered_out, stats.split_figures, stats.compound_fallbacks, stats.pairs);
    return result;
}

void write_curation_outputs(const CurateResult& result, const fs::path& out_dir) {
    write_pairs(out_dir / "pairs.jsonl", result.pairs);
    write_jsonl(out_dir / "audit.jsonl", result.audit);
    write_json(out_dir / "cluster_model.json", result.cluster_model.to_json());
    write_json(out_dir / "curate_stats.json", result.stats.to_json());
}

json SplitReport::to_json() const {
    return json{{"train_pairs", train_pairs},       {"bench_pairs", bench_pairs},   {"train_articles", train_articles},
                {"bench_articles", bench_articles}, {"pmcid_disjoint", pmcid_disjoint}, {"figure_disjoint", figure_disjoint}};
}

BenchmarkSplit benchmark_split(const std::vector<ImageCaptionPair>& pairs, const std::set<std::string>& holdout) {
    BenchmarkSplit out;
    for (const auto& p : pairs) (holdout.count(p.pmcid) ? out.bench : out.train).push_back(p);

    std::set<std::string> train_ids, bench_ids;
    std::set<std::pair<std::string, std::string>> train_figs, bench_figs;
    for (const auto& p : out.train) {
        train_ids.insert(p.pmcid);
        train_figs.insert({p.pmcid, p.figure_id});
    }
    for (const auto& p : out.bench) {
        bench_ids.insert(p.pmcid);
        bench_figs.insert({p.pmcid, p.figure_id});
    }
    auto& r = out.report;
    r.train_pairs = out.train.size();
    r.bench_pairs = out.bench.size();
    r.train_articles = train_ids.size();
    r.bench_articles = bench_ids.size();
    r.pmcid_disjoint = std::none_of(train_ids.begin(), train_ids.end(), [&](const auto& id) { return bench_ids.count(id) > 0; });
    r.figure_disjoint = std::none_of(train_figs.begin(), train_figs.end(), [&](const auto& f) { return bench_figs.count(f) > 0; });
    if (!r.pmcid_disjoint || !r.figure_disjoint) throw InvariantError("benchmark split leaks articles or figures across sides");
    return out;
}

std::set<std::string> sample_holdout(const std::vector<ImageCaptionPair>& pairs, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ParameterError("holdout fraction must be in [0, 1]");
    std::set<std::string> ids_set;
    for (const auto& p : pairs) ids_set.insert(p.pmcid);
    const std::vector<std::string> ids(ids_set.begin(), ids_set.end());
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    Rng rng(seed);
    std::set<std::string> out;
    for (auto i : rng.sample_without_replacement(ids.size(), n)) out.insert(ids[i]);
    return out;
}

}  // namespace phenovlp::corpus
