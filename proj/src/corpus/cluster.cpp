#include "phenovlp/corpus/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/text.hpp"
#include "phenovlp/nn/layers.hpp"

namespace phenovlp::corpus {

int nearest_row(const Matrix& centroids, const Eigen::RowVectorXd& x) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const double d = (centroids.row(c) - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

KMeansResult kmeans(const Matrix& points, int k, Rng& rng, const KMeansOptions& options) {
    const Eigen::Index n = points.rows();
    if (k < 1) throw ParameterError("k-means needs k >= 1");
    if (n < k) throw ParameterError("k-means with k=" + std::to_string(k) + " needs at least k points, got " + std::to_string(n));
    if (!points.allFinite()) throw ParameterError("k-means input contains non-finite values");

    KMeansResult r;
    r.centroids.resize(k, points.cols());
    r.centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - r.centroids.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = n - 1;
        if (total > 0) {
            double u = rng.uniform() * total;
            for (Eigen::Index i = 0; i < n; ++i) {
                u -= d2(i);
                if (u < 0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        r.centroids.row(c) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - r.centroids.row(c)).squaredNorm());
    }

    r.assignment.assign(static_cast<std::size_t>(n), 0);
    for (r.iterations = 1; r.iterations <= options.max_iterations; ++r.iterations) {
        for (Eigen::Index i = 0; i < n; ++i) r.assignment[static_cast<std::size_t>(i)] = nearest_row(r.centroids, points.row(i));
        Matrix sums = Matrix::Zero(k, points.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int a = r.assignment[static_cast<std::size_t>(i)];
            sums.row(a) += points.row(i);
            ++counts[static_cast<std::size_t>(a)];
        }
        double shift = 0;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) continue;
            const Eigen::RowVectorXd next = sums.row(c) / counts[static_cast<std::size_t>(c)];
            shift = std::max(shift, (next - r.centroids.row(c)).norm());
            r.centroids.row(c) = next;
        }
        if (shift <= options.tolerance) break;
    }
    r.iterations = std::min(r.iterations, options.max_iterations);
    for (Eigen::Index i = 0; i < n; ++i) r.assignment[static_cast<std::size_t>(i)] = nearest_row(r.centroids, points.row(i));
    return r;
}

LeafId ClusterFilterModel::assign(const Eigen::RowVectorXd& x) const {
    const int l1 = nearest_row(level1, x);
    const auto& sub = level2.at(static_cast<std::size_t>(l1));
    return {l1, sub.rows() == 0 ? 0 : nearest_row(sub, x)};
}

std::size_t ClusterFilterModel::leaf_count() const {
    std::size_t n = 0;
    for (const auto& m : level2) n += static_cast<std::size_t>(std::max<Eigen::Index>(m.rows(), 1));
    return n;
}

namespace {

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r;
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

Matrix matrix_from_json(const json& rows, Eigen::Index cols) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != static_cast<std::size_t>(cols)) throw InputError("cluster model: ragged centroid rows");
        for (Eigen::Index j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

}  // namespace

json ClusterFilterModel::to_json() const {
    json l2 = json::array();
    for (const auto& m : level2) l2.push_back(matrix_json(m));
    json keep = json::array();
    for (const auto& [a, b] : keep_set) keep.push_back(std::to_string(a) + ":" + std::to_string(b));
    return json{{"dim", level1.cols()}, {"level1", matrix_json(level1)}, {"level2", l2}, {"keep", keep}};
}

ClusterFilterModel ClusterFilterModel::from_json(const json& j) {
    try {
        ClusterFilterModel m;
        const auto dim = j.at("dim").get<Eigen::Index>();
        m.level1 = matrix_from_json(j.at("level1"), dim);
        for (const auto& l2 : j.at("level2")) m.level2.push_back(matrix_from_json(l2, dim));
        if (m.level2.size() != static_cast<std::size_t>(m.level1.rows())) throw InputError("cluster model: level sizes differ");
        for (const auto& k : j.at("keep")) {
            const auto parts = text::split(k.get<std::string>(), ':');
            m.keep_set.insert({std::stoi(parts.at(0)), std::stoi(parts.at(1))});
        }
        return m;
    } catch (const json::exception& e) {
        throw InputError(std::string("cluster model: ") + e.what());
    }
}

ClusterFilterModel fit_cluster_filter(const Matrix& embeddings, int k1, int k2, Rng& rng, const KMeansOptions& options) {
    if (k1 < 1 || k2 < 1) throw ParameterError("cluster filter needs k1, k2 >= 1");
    if (embeddings.rows() < k1) {
        throw ParameterError("cluster filter: " + std::to_string(embeddings.rows()) + " embeddings for k1=" + std::to_string(k1));
    }
    if (embeddings.rows() < static_cast<Eigen::Index>(k1) * k2) {
        spdlog::warn("cluster filter: {} embeddings for {} leaves; small level-1 clusters get fewer subclusters",
                     embeddings.rows(), k1 * k2);
    }
    ClusterFilterModel model;
    const auto top = kmeans(embeddings, k1, rng, options);
    model.level1 = top.centroids;
    for (int c = 0; c < k1; ++c) {
        std::vector<Eigen::Index> members;
        for (std::size_t i = 0; i < top.assignment.size(); ++i)
            if (top.assignment[i] == c) members.push_back(static_cast<Eigen::Index>(i));
        if (members.empty()) {
            model.level2.push_back(top.centroids.row(c));
            continue;
        }
        Matrix sub(static_cast<Eigen::Index>(members.size()), embeddings.cols());
        for (std::size_t i = 0; i < members.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = embeddings.row(members[i]);
        const int k_eff = std::min<int>(k2, static_cast<int>(members.size()));
        model.level2.push_back(kmeans(sub, k_eff, rng, options).centroids);
    }
    return model;
}

std::vector<int> apply_cluster_filter(const ClusterFilterModel& model, const Matrix& embeddings) {
    std::vector<int> kept;
    if (model.keep_set.empty()) {
        spdlog::warn("cluster filter: keep set is empty, every image is dropped");
        return kept;
    }
    for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
        if (model.keep_set.count(model.assign(embeddings.row(i)))) kept.push_back(static_cast<int>(i));
    return kept;
}

std::set<LeafId> read_keep_list(const std::filesystem::path& path) {
    std::set<LeafId> keep;
    const auto lines = text::split(read_text(path), '\n');
    for (std::size_t n = 0; n < lines.size(); ++n) {
        auto line = lines[n];
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = text::trim(line);
        if (line.empty()) continue;
        const auto parts = text::split(line, ':');
        try {
            std::size_t used_a = 0, used_b = 0;
            if (parts.size() != 2) throw std::invalid_argument("shape");
            const int a = std::stoi(parts[0], &used_a);
            const int b = std::stoi(parts[1], &used_b);
            if (used_a != parts[0].size() || used_b != parts[1].size() || a < 0 || b < 0) throw std::invalid_argument("digits");
            keep.insert({a, b});
        } catch (const std::exception&) {
            throw InputError(path.string() + ":" + std::to_string(n + 1) + ": expected l1:l2, got '" + line + "'");
        }
    }
    return keep;
}

void write_keep_list(const std::filesystem::path& path, const std::set<LeafId>& keep, const std::string& header) {
    std::string out;
    for (const auto& line : text::split(header, '\n'))
        if (!line.empty()) out += "# " + line + "\n";
    for (const auto& [a, b] : keep) out += std::to_string(a) + ":" + std::to_string(b) + "\n";
    write_text(path, out);
}

PixelStatsEmbedder::PixelStatsEmbedder(int dim, std::uint64_t seed) {
    if (dim < 1) throw ParameterError("embedder dim must be positive");
    Rng rng(seed);
    projection_ = nn::normal_matrix(statistics(vision::Image(1, 1)).size(), dim, 1.0, rng);
}

Eigen::RowVectorXd PixelStatsEmbedder::statistics(const vision::Image& raw) {
    const auto img = vision::resize_bilinear(raw, 32, 32);
    Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(6 + 16 + 2);
    const double n = 32.0 * 32.0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            const auto p = img.at(x, y);
            const double c[3] = {p.r / 255.0, p.g / 255.0, p.b / 255.0};
            // chroma is weighted up so colour photographs separate from line art
            f(23) += 4.0 * (std::max({c[0], c[1], c[2]}) - std::min({c[0], c[1], c[2]})) / n;
            for (int k = 0; k < 3; ++k) {
                f(k) += c[k] / n;
                f(3 + k) += c[k] * c[k] / n;
            }
            f(6 + (y / 8) * 4 + x / 8) += img.luminance(x, y) / 255.0 / 64.0;
            if (x + 1 < 32 && y + 1 < 32) {
                const double gx = img.luminance(x + 1, y) - img.luminance(x, y);
                const double gy = img.luminance(x, y + 1) - img.luminance(x, y);
                f(22) += std::sqrt(gx * gx + gy * gy) / 255.0 / (31.0 * 31.0);
            }
        }
    for (int k = 0; k < 3; ++k) f(3 + k) = std::sqrt(std::max(0.0, f(3 + k) - f(k) * f(k)));
    return f;
}

Eigen::RowVectorXd PixelStatsEmbedder::embed(const vision::Image& image) const {
    return statistics(image) * projection_;
}

}  // namespace phenovlp::corpus
