#include "phenovlp/vision/encoder.hpp"

#include "phenovlp/common/errors.hpp"
#include "phenovlp/nn/optim.hpp"

namespace phenovlp::vision {

namespace fs = std::filesystem;

void VisionEncoderConfig::validate() const {
    if (image_size <= 0) throw ParameterError("image_size must be positive");
    if (channels.empty() || channels.size() != strides.size()) {
        throw ParameterError("vision encoder needs matching, non-empty channels and strides lists");
    }
    for (int c : channels)
        if (c <= 0) throw ParameterError("conv channels must be positive");
    for (int s : strides)
        if (s <= 0) throw ParameterError("conv strides must be positive");
    if (embed_dim <= 0) throw ParameterError("embed_dim must be positive");
}

json VisionEncoderConfig::to_json() const {
    return json{{"image_size", image_size}, {"channels", channels}, {"strides", strides}, {"embed_dim", embed_dim}};
}

VisionEncoderConfig VisionEncoderConfig::from_json(const json& j) {
    VisionEncoderConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.channels = j.at("channels").get<std::vector<int>>();
    c.strides = j.at("strides").get<std::vector<int>>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.validate();
    return c;
}

VisionEncoder::VisionEncoder(const VisionEncoderConfig& config, std::uint64_t seed) : config_(config) {
    config.validate();
    Rng rng(seed);
    int in_c = 3, h = config.image_size, w = config.image_size;
    for (std::size_t i = 0; i < config.channels.size(); ++i) {
        nn::ConvGeometry g{in_c, h, w, config.channels[i], 3, config.strides[i], 1};
        convs_.emplace_back(g, rng);
        in_c = g.out_channels;
        h = g.out_height();
        w = g.out_width();
    }
    projection_ = nn::Linear(in_c, config.embed_dim, rng);
}

VisionEncoder VisionEncoder::clone() const {
    VisionEncoder copy(config_, 0);
    auto dst = copy.parameters();
    nn::copy_matching(parameters(), dst);
    return copy;
}

nn::Var VisionEncoder::forward(const nn::Matrix& images) const {
    if (images.cols() != input_size()) {
        throw ParameterError("vision encoder expects " + std::to_string(input_size()) + " inputs per image, got " +
                             std::to_string(images.cols()));
    }
    nn::Var x = nn::constant(images);
    for (const auto& conv : convs_) x = nn::relu(conv(x));
    const auto& last = convs_.back().geom;
    x = nn::global_avg_pool(x, last.out_channels, last.out_height(), last.out_width());
    return nn::l2_normalize_rows(projection_(x));
}

nn::Matrix VisionEncoder::encode(const nn::Matrix& images, Eigen::Index batch_size) const {
    nn::Matrix out(images.rows(), config_.embed_dim);
    if (images.rows() == 0) return out;
    nn::NoGradGuard no_grad;
    batch_size = std::max<Eigen::Index>(batch_size, 1);
    for (Eigen::Index start = 0; start < images.rows(); start += batch_size) {
        const Eigen::Index n = std::min(batch_size, images.rows() - start);
        out.middleRows(start, n) = forward(images.middleRows(start, n)).value();
    }
    return out;
}

nn::NamedParams VisionEncoder::parameters() const {
    nn::NamedParams out;
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(out, "vision.conv" + std::to_string(i));
    projection_.collect(out, "vision.projection");
    return out;
}

void VisionEncoder::save(const fs::path& dir) const {
    fs::create_directories(dir);
    write_json(dir / "vision.json", config_.to_json());
    nn::save_params(dir / "vision_weights.bin", parameters());
}

VisionEncoder VisionEncoder::load(const fs::path& dir) {
    VisionEncoder enc(VisionEncoderConfig::from_json(read_json(dir / "vision.json")), 0);
    auto params = enc.parameters();
    nn::load_params(dir / "vision_weights.bin", params);
    return enc;
}

}  // namespace phenovlp::vision
