#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/nn/layers.hpp"

namespace phenovlp::vision {

struct VisionEncoderConfig {
    int image_size = 224;
    std::vector<int> channels{8, 16, 16, 32};
    std::vector<int> strides{1, 2, 2, 1};
    int embed_dim = 32;

    void validate() const;
    json to_json() const;
    static VisionEncoderConfig from_json(const json& j);
    bool operator==(const VisionEncoderConfig&) const = default;
};

// 3x3 conv + ReLU stack, global average pool, linear projection, L2 norm.
// Input rows are preprocessed images (3 * size * size, channel-major).
class VisionEncoder {
public:
    VisionEncoder(const VisionEncoderConfig& config, std::uint64_t seed);

    VisionEncoder(VisionEncoder&&) noexcept = default;
    VisionEncoder& operator=(VisionEncoder&&) noexcept = default;
    VisionEncoder(const VisionEncoder&) = delete;
    VisionEncoder& operator=(const VisionEncoder&) = delete;

    VisionEncoder clone() const;

    nn::Var forward(const nn::Matrix& images) const;
    nn::Matrix encode(const nn::Matrix& images, Eigen::Index batch_size = 64) const;

    const VisionEncoderConfig& config() const { return config_; }
    int dim() const { return config_.embed_dim; }
    Eigen::Index input_size() const { return 3L * config_.image_size * config_.image_size; }

    nn::NamedParams parameters() const;

    void save(const std::filesystem::path& dir) const;
    static VisionEncoder load(const std::filesystem::path& dir);

private:
    VisionEncoderConfig config_;
    std::vector<nn::Conv2d> convs_;
    nn::Linear projection_;
};

}  // namespace phenovlp::vision
