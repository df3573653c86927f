#include "phenovlp/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/rng.hpp"
#include "phenovlp/common/text.hpp"

namespace phenovlp::eval {

namespace {

std::size_t count_placeholders(std::string_view s) {
    std::size_t n = 0;
    for (auto pos = s.find(kClassPlaceholder); pos != std::string_view::npos;
         pos = s.find(kClassPlaceholder, pos + kClassPlaceholder.size()))
        ++n;
    return n;
}

}  // namespace

void PromptTemplateSet::validate() const {
    if (templates.empty()) throw ParameterError("empty prompt template set");
    for (const auto& t : templates) {
        if (count_placeholders(t) != 1) {
            throw ParameterError("template must contain [CLASS_NAME] exactly once: " + t);
        }
    }
}

std::vector<std::string> PromptTemplateSet::instantiate(std::string_view class_name) const {
    validate();
    std::vector<std::string> out;
    out.reserve(templates.size());
    for (const auto& t : templates) out.push_back(text::replace_all(t, kClassPlaceholder, class_name));
    return out;
}

PromptTemplateSet PromptTemplateSet::defaults() {
    return {{
        "A medical image showing [CLASS_NAME].",
        "Diagnosis of [CLASS_NAME].",
        "Clinical signs of [CLASS_NAME].",
        "Image from a patient with [CLASS_NAME].",
        "This is a photo of [CLASS_NAME].",
        "Findings consistent with [CLASS_NAME].",
        "Evidence of [CLASS_NAME].",
        "A case of [CLASS_NAME].",
        "An example of [CLASS_NAME].",
        "This image displays features of [CLASS_NAME].",
        "Image confirms a diagnosis of [CLASS_NAME].",
        "Abnormal findings suggesting [CLASS_NAME].",
    }};
}

PromptTemplateSet PromptTemplateSet::load(const std::filesystem::path& path) {
    PromptTemplateSet set;
    for (const auto& line : text::split(read_text(path), '\n')) {
        const auto t = text::trim(line);
        if (t.empty() || t[0] == '#') continue;
        set.templates.push_back(t);
    }
    try {
        set.validate();
    } catch (const ParameterError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    return set;
}

Eigen::RowVectorXd class_embedding(const TextEmbedder& embed, std::string_view class_name,
                                   const PromptTemplateSet& templates) {
    const auto prompts = templates.instantiate(class_name);
    const Matrix e = embed(prompts);
    Eigen::RowVectorXd mean = e.colwise().mean();
    const double norm = mean.norm();
    if (norm == 0.0) throw InvariantError("class embedding averaged to zero for " + std::string(class_name));
    return mean / norm;
}

Matrix class_embeddings(const TextEmbedder& embed, const std::vector<std::string>& class_names,
                        const PromptTemplateSet& templates) {
    templates.validate();
    // One encoder call for every prompt of every class.
    std::vector<std::string> prompts;
    for (const auto& name : class_names)
        for (auto& p : templates.instantiate(name)) prompts.push_back(std::move(p));
    const Matrix e = prompts.empty() ? Matrix() : embed(prompts);
    const auto per = static_cast<Eigen::Index>(templates.templates.size());
    Matrix out(static_cast<Eigen::Index>(class_names.size()), e.cols());
    for (Eigen::Index c = 0; c < out.rows(); ++c) {
        Eigen::RowVectorXd mean = e.middleRows(c * per, per).colwise().mean();
        const double norm = mean.norm();
        if (norm == 0.0) throw InvariantError("class embedding averaged to zero for " + class_names[static_cast<std::size_t>(c)]);
        out.row(c) = mean / norm;
    }
    return out;
}

ZeroShotResult zero_shot_classify(const Matrix& image_embeddings, const Matrix& class_embeddings,
                                  std::span<const int> labels) {
    if (class_embeddings.rows() == 0) throw ParameterError("zero-shot classification needs at least one class");
    if (!labels.empty() && labels.size() != static_cast<std::size_t>(image_embeddings.rows())) {
        throw ParameterError("label count differs from image count");
    }
    ZeroShotResult out;
    Matrix unit = image_embeddings;
    for (Eigen::Index i = 0; i < unit.rows(); ++i) {
        const double n = unit.row(i).norm();
        if (n > 0) unit.row(i) /= n;
    }
    const Matrix scores = unit * class_embeddings.transpose();
    int correct = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < scores.cols(); ++c)
            if (scores(i, c) > scores(i, best)) best = static_cast<int>(c);
        out.predictions.push_back(best);
        if (!labels.empty() && labels[static_cast<std::size_t>(i)] == best) ++correct;
    }
    if (!labels.empty()) out.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    return out;
}

std::vector<int> top_k(const Eigen::RowVectorXd& scores, int k) {
    std::vector<int> idx(static_cast<std::size_t>(scores.size()));
    std::iota(idx.begin(), idx.end(), 0);
    k = std::min<int>(k, static_cast<int>(idx.size()));
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

double recall_at_k(const Matrix& similarity, const std::vector<std::vector<int>>& truth, int k, HitRule rule) {
    if (k < 1 || k > similarity.cols()) {
        throw ParameterError("k=" + std::to_string(k) + " outside [1, " + std::to_string(similarity.cols()) + "]");
    }
    if (truth.size() != static_cast<std::size_t>(similarity.rows())) throw ParameterError("truth size differs from query count");
    if (truth.empty()) return 0.0;
    int hits = 0;
    for (Eigen::Index q = 0; q < similarity.rows(); ++q) {
        const auto& t = truth[static_cast<std::size_t>(q)];
        if (t.empty()) throw ParameterError("empty truth set for query " + std::to_string(q));
        const auto top = top_k(similarity.row(q), k);
        auto in_top = [&](int g) { return std::find(top.begin(), top.end(), g) != top.end(); };
        const bool hit = rule == HitRule::any ? std::any_of(t.begin(), t.end(), in_top) : std::all_of(t.begin(), t.end(), in_top);
        hits += hit;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

json RetrievalReport::to_json() const {
    return json{{"task", task}, {"metrics", metrics}, {"n_queries", n_queries}, {"k_values", k_values}};
}

RetrievalReport retrieval_report(const std::string& task, const Matrix& similarity,
                                 const std::vector<std::vector<int>>& truth, const std::vector<int>& ks, HitRule rule) {
    RetrievalReport r;
    r.task = task;
    r.n_queries = static_cast<int>(similarity.rows());
    for (int k : ks) {
        if (k > similarity.cols()) {
            spdlog::warn("{}: skipping R@{} (gallery has {} items)", task, k, similarity.cols());
            continue;
        }
        r.metrics["R@" + std::to_string(k)] = recall_at_k(similarity, truth, k, rule);
        r.k_values.push_back(k);
    }
    return r;
}

PhenotypeRetrieval phenotype_retrieval(const Matrix& image_embeddings, const Matrix& phenotype_embeddings,
                                       const std::vector<std::vector<int>>& image_phenotypes,
                                       const std::vector<int>& ks, HitRule rule) {
    PhenotypeRetrieval out;
    const Matrix sim = image_embeddings * phenotype_embeddings.transpose();
    out.i2p = retrieval_report("i2p", sim, image_phenotypes, ks, rule);

    std::vector<std::vector<int>> linked(static_cast<std::size_t>(phenotype_embeddings.rows()));
    for (std::size_t i = 0; i < image_phenotypes.size(); ++i)
        for (int p : image_phenotypes[i]) linked[static_cast<std::size_t>(p)].push_back(static_cast<int>(i));
    std::vector<Eigen::Index> queries;
    std::vector<std::vector<int>> truth;
    for (std::size_t p = 0; p < linked.size(); ++p) {
        if (linked[p].empty()) {
            ++out.p2i_excluded;
            continue;
        }
        queries.push_back(static_cast<Eigen::Index>(p));
        truth.push_back(linked[p]);
    }
    if (out.p2i_excluded > 0) spdlog::info("p2i: {} phenotypes without linked images excluded", out.p2i_excluded);
    Matrix p2i(static_cast<Eigen::Index>(queries.size()), sim.rows());
    for (std::size_t q = 0; q < queries.size(); ++q) p2i.row(static_cast<Eigen::Index>(q)) = sim.col(queries[q]).transpose();
    // "Any image of the phenotype" is the natural hit for P2I.
    out.p2i = retrieval_report("p2i", p2i, truth, ks, HitRule::any);
    return out;
}

json MatchingResult::to_json() const {
    return json{{"precision", precision}, {"recall", recall}, {"f1", f1}, {"n_images", n_images}, {"excluded", excluded}};
}

MatchingResult matching_metrics(const std::vector<std::set<int>>& predicted, const std::vector<std::set<int>>& truth,
                                bool macro) {
    if (predicted.size() != truth.size()) throw ParameterError("predicted and truth lists differ in length");
    MatchingResult r;
    double inter = 0, pred_total = 0, truth_total = 0;
    double p_sum = 0, r_sum = 0, f_sum = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].empty()) {
            ++r.excluded;
            continue;
        }
        ++r.n_images;
        double both = 0;
        for (int p : predicted[i]) both += truth[i].count(p);
        inter += both;
        pred_total += static_cast<double>(predicted[i].size());
        truth_total += static_cast<double>(truth[i].size());
        const double pi = predicted[i].empty() ? 0.0 : both / static_cast<double>(predicted[i].size());
        const double ri = both / static_cast<double>(truth[i].size());
        p_sum += pi;
        r_sum += ri;
        f_sum += (pi + ri) > 0 ? 2 * pi * ri / (pi + ri) : 0.0;
    }
    if (r.excluded > 0) spdlog::warn("matching: {} images with empty truth sets excluded", r.excluded);
    if (r.n_images == 0) return r;
    if (macro) {
        r.precision = p_sum / r.n_images;
        r.recall = r_sum / r.n_images;
        r.f1 = f_sum / r.n_images;
    } else {
        r.precision = pred_total > 0 ? inter / pred_total : 0.0;
        r.recall = inter / truth_total;
        r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    }
    return r;
}

std::vector<std::set<int>> predicted_phenotype_sets(const Matrix& similarity, const std::vector<std::set<int>>& truth,
                                                    int fixed_k) {
    std::vector<std::set<int>> out;
    for (Eigen::Index i = 0; i < similarity.rows(); ++i) {
        const int k = fixed_k > 0 ? fixed_k : static_cast<int>(truth[static_cast<std::size_t>(i)].size());
        const auto top = top_k(similarity.row(i), k);
        out.emplace_back(top.begin(), top.end());
    }
    return out;
}

void LabeledFeatureSet::validate() const {
    if (labels.size() != static_cast<std::size_t>(features.rows())) throw ParameterError("label count differs from feature rows");
    for (int l : labels)
        if (l < 0 || l >= classes()) throw ParameterError("label out of range: " + std::to_string(l));
}

std::vector<int> stratified_subsample(const std::vector<int>& labels, int classes, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ParameterError("probe ratio must be in (0, 1]");
    Rng rng(seed);
    std::vector<int> chosen;
    for (int c = 0; c < classes; ++c) {
        std::vector<int> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) idx.push_back(static_cast<int>(i));
        if (idx.empty()) continue;
        rng.shuffle(idx);
        const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(idx.size()) - 1e-9)));
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(take, idx.size())));
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

namespace {

// Mean cross-entropy + 0.5 * wd * ||W||^2 and its gradient.
double probe_objective(const Matrix& x, const std::vector<int>& y, const Matrix& w, const Eigen::RowVectorXd& b,
                       double wd, Matrix* gw, Eigen::RowVectorXd* gb) {
    const Eigen::Index n = x.rows();
    Matrix logits = x * w;
    logits.rowwise() += b;
    double loss = 0;
    Matrix p(n, w.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = logits.row(i).maxCoeff();
        const auto e = (logits.row(i).array() - mx).exp();
        const double s = e.sum();
        p.row(i) = e / s;
        loss += mx + std::log(s) - logits(i, y[static_cast<std::size_t>(i)]);
    }
    loss = loss / static_cast<double>(n) + 0.5 * wd * w.squaredNorm();
    if (gw) {
        for (Eigen::Index i = 0; i < n; ++i) p(i, y[static_cast<std::size_t>(i)]) -= 1.0;
        p /= static_cast<double>(n);
        *gw = x.transpose() * p + wd * w;
        *gb = p.colwise().sum();
    }
    return loss;
}

}  // namespace

ProbeResult linear_probe(const LabeledFeatureSet& train, const LabeledFeatureSet& test, double ratio,
                         std::uint64_t seed, const ProbeOptions& options) {
    train.validate();
    test.validate();
    if (train.features.cols() != test.features.cols()) throw ParameterError("train/test feature dims differ");
    const int classes = std::max(train.classes(), test.classes());
    const auto subset = stratified_subsample(train.labels, classes, ratio, seed);
    if (subset.empty()) throw ParameterError("probe training subset is empty");

    Matrix x(static_cast<Eigen::Index>(subset.size()), train.features.cols());
    std::vector<int> y;
    std::vector<bool> present(static_cast<std::size_t>(classes), false);
    for (std::size_t i = 0; i < subset.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = train.features.row(subset[i]);
        y.push_back(train.labels[static_cast<std::size_t>(subset[i])]);
        present[static_cast<std::size_t>(y.back())] = true;
    }
    for (int c = 0; c < classes; ++c)
        if (!present[static_cast<std::size_t>(c)]) spdlog::warn("probe: class {} absent from the training subsample", c);

    ProbeResult r;
    r.train_examples = static_cast<int>(subset.size());
    r.weights = Matrix::Zero(x.cols(), classes);
    r.bias = Eigen::RowVectorXd::Zero(classes);
    Matrix gw;
    Eigen::RowVectorXd gb;
    double loss = probe_objective(x, y, r.weights, r.bias, options.weight_decay, &gw, &gb);
    double lr = options.learning_rate;
    for (r.steps = 0; r.steps < options.max_steps; ++r.steps) {
        // Gradient step with backtracking (Armijo) line search.
        const double gnorm2 = gw.squaredNorm() + gb.squaredNorm();
        if (gnorm2 == 0.0) break;
        Matrix w_new;
        Eigen::RowVectorXd b_new;
        double new_loss = loss;
        for (int tries = 0; tries < 50; ++tries) {
            w_new = r.weights - lr * gw;
            b_new = r.bias - lr * gb;
            new_loss = probe_objective(x, y, w_new, b_new, options.weight_decay, nullptr, nullptr);
            if (new_loss <= loss - 0.5 * lr * gnorm2) break;
            lr *= 0.5;
        }
        const double change = loss - new_loss;
        r.weights = w_new;
        r.bias = b_new;
        loss = probe_objective(x, y, r.weights, r.bias, options.weight_decay, &gw, &gb);
        lr = std::min(lr * 2.0, 1e3);
        if (change >= 0 && change < options.tolerance * std::max(1.0, std::abs(loss))) {
            ++r.steps;
            break;
        }
    }

    Matrix logits = test.features * r.weights;
    logits.rowwise() += r.bias;
    int correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = static_cast<int>(c);
        r.predictions.push_back(best);
        correct += best == test.labels[static_cast<std::size_t>(i)];
    }
    r.accuracy = logits.rows() ? static_cast<double>(correct) / static_cast<double>(logits.rows()) : 0.0;
    return r;
}

}  // namespace phenovlp::eval
