#include "phenovlp/knowledge/text_encoder.hpp"

#include <algorithm>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/hash.hpp"
#include "phenovlp/common/text.hpp"
#include "phenovlp/nn/optim.hpp"

namespace phenovlp::knowledge {

namespace {
constexpr double kProjectionGain = 0.02;
}  // namespace

namespace fs = std::filesystem;

json TextEncoderConfig::to_json() const {
    return json{{"vocab_size", vocab_size}, {"model_dim", model_dim}, {"heads", heads},
                {"layers", layers},         {"hidden_dim", hidden_dim}, {"embed_dim", embed_dim},
                {"max_tokens", max_tokens}};
}

TextEncoderConfig TextEncoderConfig::from_json(const json& j) {
    TextEncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.model_dim = j.at("model_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.layers = j.at("layers").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.max_tokens = j.at("max_tokens").get<int>();
    return c;
}

HashTokenizer::HashTokenizer(int vocab_size, int max_tokens) : vocab_size_(vocab_size), max_tokens_(max_tokens) {
    if (vocab_size < 2) throw ParameterError("vocab_size must be at least 2");
    if (max_tokens < 1) throw ParameterError("max_tokens must be positive");
}

std::vector<int> HashTokenizer::encode(std::string_view s) const {
    std::vector<int> ids;
    for (const auto& w : text::word_tokens(s)) {
        if (static_cast<int>(ids.size()) == max_tokens_) break;
        ids.push_back(1 + static_cast<int>(fnv1a(w) % static_cast<std::uint64_t>(vocab_size_ - 1)));
    }
    if (ids.empty()) ids.push_back(0);
    return ids;
}

TextEncoder::TextEncoder(const TextEncoderConfig& config, std::uint64_t seed)
    : config_(config), tokenizer_(config.vocab_size, config.max_tokens) {
    if (config.model_dim <= 0 || config.embed_dim <= 0 || config.layers < 0) {
        throw ParameterError("text encoder dimensions must be positive");
    }
    Rng rng(seed);
    token_embedding_ = nn::parameter(nn::normal_matrix(config.vocab_size, config.model_dim, 0.5, rng));
    position_embedding_ = nn::parameter(nn::normal_matrix(config.max_tokens, config.model_dim, 0.02, rng));
    for (int i = 0; i < config.layers; ++i) {
        blocks_.emplace_back(config.model_dim, config.heads, config.hidden_dim, rng);
    }
    final_norm_ = nn::LayerNorm(config.model_dim);
    projection_ = nn::Linear(config.model_dim, config.embed_dim, rng);
    // Start anisotropic: every text embeds near one shared direction, so
    // initial similarities are close to uniform.
    projection_.weight.mutable_value() *= kProjectionGain;
    projection_.bias.mutable_value() = nn::normal_matrix(1, config.embed_dim, 1.0, rng).rowwise().normalized();
}

TextEncoder TextEncoder::clone() const {
    TextEncoder copy(config_, 0);
    auto dst = copy.parameters();
    nn::copy_matching(parameters(), dst);
    return copy;
}

nn::NamedParams TextEncoder::parameters() const {
    nn::NamedParams out;
    out.emplace_back("text.token_embedding", token_embedding_);
    out.emplace_back("text.position_embedding", position_embedding_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, "text.block" + std::to_string(i));
    final_norm_.collect(out, "text.final_norm");
    projection_.collect(out, "text.projection");
    return out;
}

nn::Var TextEncoder::encode_one(const std::vector<int>& ids) const {
    std::vector<int> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
    nn::Var x = nn::add(nn::gather_rows(token_embedding_, ids), nn::gather_rows(position_embedding_, positions));
    for (const auto& block : blocks_) x = block(x);
    return nn::mean_rows(final_norm_(x));
}

nn::Var TextEncoder::pooled(std::span<const std::string> texts) const {
    if (texts.empty()) throw ParameterError("pooled: empty text list");
    std::vector<nn::Var> rows;
    rows.reserve(texts.size());
    for (const auto& t : texts) rows.push_back(encode_one(tokenizer_.encode(t)));
    return rows.size() == 1 ? rows[0] : nn::vstack(rows);
}

nn::Var TextEncoder::forward(std::span<const std::string> texts) const {
    return nn::l2_normalize_rows(projection_(pooled(texts)));
}

nn::Matrix TextEncoder::encode(std::span<const std::string> texts, std::size_t batch_size) const {
    nn::Matrix out(static_cast<Eigen::Index>(texts.size()), config_.embed_dim);
    if (texts.empty()) return out;
    nn::NoGradGuard no_grad;
    batch_size = std::max<std::size_t>(batch_size, 1);
    for (std::size_t start = 0; start < texts.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, texts.size() - start);
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
            forward(texts.subspan(start, n)).value();
    }
    return out;
}

void TextEncoder::save(const fs::path& dir) const {
    fs::create_directories(dir);
    write_json(dir / "encoder.json", config_.to_json());
    nn::save_params(dir / "weights.bin", parameters());
}

TextEncoder TextEncoder::load(const fs::path& dir) {
    const auto cfg = TextEncoderConfig::from_json(read_json(dir / "encoder.json"));
    TextEncoder enc(cfg, 0);
    auto params = enc.parameters();
    nn::load_params(dir / "weights.bin", params);
    return enc;
}

}  // namespace phenovlp::knowledge
