#include "phenovlp/vlp/model.hpp"

#include "phenovlp/common/errors.hpp"
#include "phenovlp/nn/optim.hpp"

namespace phenovlp::vlp {

namespace fs = std::filesystem;

nn::NamedParams VLModel::parameters() const {
    auto out = vision.parameters();
    for (auto& p : text.parameters()) out.push_back(std::move(p));
    if (kd_projection) kd_projection->collect(out, "kd_projection");
    return out;
}

nn::Var VLModel::project_for_teacher(const nn::Var& t) const {
    if (!kd_projection) return t;
    return nn::l2_normalize_rows((*kd_projection)(t));
}

VLModel VLModel::clone() const {
    VLModel copy{vision.clone(), text.clone(), std::nullopt};
    if (kd_projection) {
        nn::Linear proj;
        proj.weight = nn::parameter(kd_projection->weight.value());
        proj.bias = nn::parameter(kd_projection->bias.value());
        copy.kd_projection = proj;
    }
    return copy;
}

void VLModel::save(const fs::path& dir) const {
    vision.save(dir);
    text.save(dir);
    json meta{{"embed_dim", dim()}, {"kd_projection", nullptr}};
    if (kd_projection) {
        meta["kd_projection"] = json{{"in", kd_projection->weight.rows()}, {"out", kd_projection->weight.cols()}};
        nn::NamedParams p;
        kd_projection->collect(p, "kd_projection");
        nn::save_params(dir / "kd_projection.bin", p);
    }
    write_json(dir / "model.json", meta);
}

VLModel VLModel::load(const fs::path& dir) {
    if (!fs::exists(dir / "model.json")) throw InputError("not a model checkpoint: " + dir.string());
    VLModel m{vision::VisionEncoder::load(dir), knowledge::TextEncoder::load(dir), std::nullopt};
    const auto meta = read_json(dir / "model.json");
    if (!meta.at("kd_projection").is_null()) {
        Rng rng(0);
        nn::Linear proj(meta["kd_projection"]["in"].get<int>(), meta["kd_projection"]["out"].get<int>(), rng);
        nn::NamedParams p;
        proj.collect(p, "kd_projection");
        nn::load_params(dir / "kd_projection.bin", p);
        m.kd_projection = proj;
    }
    if (m.vision.dim() != m.text.dim()) throw InputError("checkpoint encoders disagree on embedding dim");
    return m;
}

TextInit text_init_from_string(std::string_view s) {
    if (s == "scratch") return TextInit::scratch;
    if (s == "pretrained") return TextInit::pretrained;
    throw ParameterError("init must be scratch or pretrained, got " + std::string(s));
}

std::string_view to_string(TextInit init) { return init == TextInit::scratch ? "scratch" : "pretrained"; }

VLModel make_vl_model(const VLModelSpec& spec, const knowledge::TextEncoder* init_from, std::optional<int> teacher_dim) {
    if (spec.vision.embed_dim != spec.text.embed_dim) {
        throw ParameterError("vision and text encoders must share the embedding dim");
    }
    Rng rng(spec.seed);
    const auto vision_seed = rng.next_u64();
    const auto text_seed = rng.next_u64();
    VLModel m{vision::VisionEncoder(spec.vision, vision_seed), knowledge::TextEncoder(spec.text, text_seed), std::nullopt};
    if (spec.init == TextInit::pretrained) {
        if (!init_from) throw ParameterError("pretrained init needs a knowledge encoder");
        if (!(init_from->config() == spec.text)) {
            throw ParameterError("pretrained init: student text config differs from the knowledge encoder");
        }
        auto dst = m.text.parameters();
        nn::copy_matching(init_from->parameters(), dst);
    }
    if (teacher_dim && *teacher_dim != spec.text.embed_dim) {
        m.kd_projection = nn::Linear(spec.text.embed_dim, *teacher_dim, rng);
    }
    return m;
}

}  // namespace phenovlp::vlp
