#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <utility>
#include <vector>

#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/common/rng.hpp"
#include "phenovlp/nn/autograd.hpp"
#include "phenovlp/vision/image.hpp"

namespace phenovlp::corpus {

using nn::Matrix;

struct KMeansOptions {
    int max_iterations = 100;
    double tolerance = 1e-4;  // largest centroid shift that counts as converged
};

struct KMeansResult {
    Matrix centroids;             // k x d
    std::vector<int> assignment;  // per input row
    int iterations = 0;
};

// Lloyd iterations from k-means++ seeding. Nearest-centroid ties go to the
// lower index; an emptied cluster keeps its previous centroid.
KMeansResult kmeans(const Matrix& points, int k, Rng& rng, const KMeansOptions& options = {});

int nearest_row(const Matrix& centroids, const Eigen::RowVectorXd& x);

using LeafId = std::pair<int, int>;  // (level-1 cluster, level-2 cluster)

struct ClusterFilterModel {
    Matrix level1;
    std::vector<Matrix> level2;  // per level-1 cluster
    std::set<LeafId> keep_set;

    LeafId assign(const Eigen::RowVectorXd& x) const;
    std::size_t leaf_count() const;

    json to_json() const;
    static ClusterFilterModel from_json(const json& j);
};

// Level-1 k-means with k1 clusters, then k-means with k2 clusters inside each
// level-1 cluster (fewer when a cluster holds fewer than k2 points).
ClusterFilterModel fit_cluster_filter(const Matrix& embeddings, int k1, int k2, Rng& rng,
                                      const KMeansOptions& options = {});

// Indices whose leaf is in the keep set, ascending.
std::vector<int> apply_cluster_filter(const ClusterFilterModel& model, const Matrix& embeddings);

// One "l1:l2" id per line; '#' starts a comment.
std::set<LeafId> read_keep_list(const std::filesystem::path& path);
void write_keep_list(const std::filesystem::path& path, const std::set<LeafId>& keep, const std::string& header = {});

class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    virtual Eigen::RowVectorXd embed(const vision::Image& image) const = 0;
    virtual int dim() const = 0;
};

// Fixed random projection of colour and layout statistics: per-channel mean
// and standard deviation, a 4x4 grid of mean luminance, mean edge strength and
// mean chroma.
class PixelStatsEmbedder : public ImageEmbedder {
public:
    explicit PixelStatsEmbedder(int dim = 16, std::uint64_t seed = 0);
    Eigen::RowVectorXd embed(const vision::Image& image) const override;
    int dim() const override { return static_cast<int>(projection_.cols()); }
    static Eigen::RowVectorXd statistics(const vision::Image& image);

private:
    Matrix projection_;
};

}  // namespace phenovlp::corpus
