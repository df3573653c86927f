#include "phenovlp/vlp/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/nn/optim.hpp"
#include "phenovlp/vlp/loss.hpp"

namespace phenovlp::vlp {

namespace fs = std::filesystem;

namespace {
constexpr double kMaxLogScale = 4.605170185988092;  // log(100)
}  // namespace

void VLPTrainConfig::validate() const {
    if (batch_size < 2) throw ParameterError("batch_size must be at least 2");
    if (!(alpha >= 0.0)) throw ParameterError("alpha must be non-negative");
    if (!(tau_m > 0.0) || !(tau_kd > 0.0)) throw ParameterError("temperatures must be positive");
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
    if (warmup_steps < 0) throw ParameterError("warmup_steps must be non-negative");
    if (epochs < 0) throw ParameterError("epochs must be non-negative");
    if (image_size <= 0 || max_tokens <= 0) throw ParameterError("image_size and max_tokens must be positive");
}

json VLPTrainConfig::to_json() const {
    return json{{"batch_size", batch_size},
                {"alpha", alpha},
                {"tau_m", tau_m},
                {"tau_kd", tau_kd},
                {"learning_rate", learning_rate},
                {"weight_decay", weight_decay},
                {"warmup_steps", warmup_steps},
                {"epochs", epochs},
                {"seed", seed},
                {"image_size", image_size},
                {"max_tokens", max_tokens},
                {"kd_enabled", kd_enabled},
                {"learnable_temperature", learnable_temperature},
                {"max_steps", max_steps}};
}

nn::Matrix VLPDataset::images() const {
    if (examples.empty()) return {};
    nn::Matrix m(static_cast<Eigen::Index>(examples.size()), examples[0].image.size());
    for (std::size_t i = 0; i < examples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = examples[i].image;
    return m;
}

std::vector<std::string> VLPDataset::captions() const {
    std::vector<std::string> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(e.caption);
    return out;
}

VLPDataset load_vlp_dataset(const std::vector<corpus::ImageCaptionPair>& pairs, const fs::path& base_dir,
                            int image_size, bool fail_fast, const vision::Normalization& norm) {
    VLPDataset data;
    for (const auto& p : pairs) {
        Eigen::RowVectorXd pixels;
        try {
            pixels = vision::preprocess(vision::load_image(base_dir / p.image_ref), image_size, norm);
        } catch (const InputError& e) {
            if (fail_fast) throw;
            spdlog::warn("skipping pair {}: {}", p.pair_id, e.what());
            ++data.skipped_missing;
            continue;
        }
        data.examples.push_back({p.pair_id, std::move(pixels), p.caption, p.phenotype_ids});
    }
    if (data.skipped_missing > 0) spdlog::warn("{} pairs skipped for unreadable images", data.skipped_missing);
    return data;
}

ImageEncodings encode_image_files(const VLModel& model, const std::vector<fs::path>& paths,
                                  const vision::Normalization& norm) {
    ImageEncodings out;
    out.embeddings = nn::Matrix::Zero(static_cast<Eigen::Index>(paths.size()), model.dim());
    out.errors.resize(paths.size());
    std::vector<Eigen::Index> ok;
    nn::Matrix batch(0, model.vision.input_size());
    std::vector<Eigen::RowVectorXd> rows;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        try {
            rows.push_back(vision::preprocess(vision::load_image(paths[i]), model.vision.config().image_size, norm));
            ok.push_back(static_cast<Eigen::Index>(i));
        } catch (const InputError& e) {
            out.errors[i] = e.what();
        }
    }
    if (ok.empty()) return out;
    batch.resize(static_cast<Eigen::Index>(rows.size()), model.vision.input_size());
    for (std::size_t r = 0; r < rows.size(); ++r) batch.row(static_cast<Eigen::Index>(r)) = rows[r];
    const nn::Matrix emb = model.encode_images(batch);
    for (std::size_t r = 0; r < ok.size(); ++r) out.embeddings.row(ok[r]) = emb.row(static_cast<Eigen::Index>(r));
    return out;
}

long vlp_steps_per_epoch(std::size_t examples, int batch_size) {
    if (examples < 2) return 0;
    const auto b = static_cast<std::size_t>(batch_size);
    long batches = static_cast<long>((examples + b - 1) / b);
    // A trailing single-example batch has no negatives; fold it away.
    if (batches > 1 && examples % b == 1) --batches;
    return batches;
}

long vlp_total_steps(const VLPTrainConfig& config, std::size_t examples) {
    long total = vlp_steps_per_epoch(examples, config.batch_size) * config.epochs;
    if (config.max_steps >= 0) total = std::min(total, config.max_steps);
    return total;
}

void write_loss_history(const fs::path& path, const std::vector<StepRecord>& history) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "step,lr,loss,contrastive,distillation\n";
    for (const auto& r : history)
        csv << r.step << ',' << r.lr << ',' << r.loss << ',' << r.contrastive << ',' << r.distillation << '\n';
    write_text(path, csv.str());
}

namespace {

[[noreturn]] void dump_nan_batch(const VLPTrainConfig& config, const VLPDataset& data, long step,
                                 const std::vector<std::size_t>& batch) {
    json ids = json::array();
    json captions = json::array();
    for (auto i : batch) {
        ids.push_back(data.examples[i].pair_id);
        captions.push_back(data.examples[i].caption);
    }
    std::string where = "(not written)";
    if (!config.diagnostics_dir.empty()) {
        const auto path = config.diagnostics_dir / ("nan_batch_step" + std::to_string(step) + ".json");
        write_json(path, json{{"step", step}, {"pair_ids", ids}, {"captions", captions}});
        where = path.string();
    }
    throw StageError("train-vlp", "non-finite loss at step " + std::to_string(step) + "; batch dump " + where);
}

}  // namespace

VLPTrainResult train_vlp(const VLPTrainConfig& config, const VLPDataset& data, VLModel model,
                         const TeacherHandle* teacher, const VLPStepHook& hook) {
    config.validate();
    const bool distill = config.kd_enabled && config.alpha > 0.0;
    if (config.kd_enabled && !teacher) throw ParameterError("distillation is enabled but no teacher was given");
    if (distill) {
        const int student_dim = model.kd_projection ? static_cast<int>(model.kd_projection->weight.cols()) : model.dim();
        if (student_dim != teacher->dim()) {
            throw ParameterError("teacher dim " + std::to_string(teacher->dim()) + " differs from student dim " +
                                 std::to_string(student_dim) + " and the model has no matching projection");
        }
    }

    const long total = vlp_total_steps(config, data.examples.size());
    VLPTrainResult result{std::move(model), {}, total};
    if (total == 0) return result;
    if (config.warmup_steps >= total) {
        throw ParameterError("warmup_steps (" + std::to_string(config.warmup_steps) + ") must be below the " +
                             std::to_string(total) + " total training steps");
    }

    auto params = result.model.parameters();
    nn::Var log_scale;
    if (config.learnable_temperature) {
        log_scale = nn::parameter(nn::Matrix::Constant(1, 1, std::log(1.0 / config.tau_m)));
        params.emplace_back("logit_scale", log_scale);
    }
    nn::AdamW optim(params, {.weight_decay = config.weight_decay});

    const nn::Matrix all_images = data.images();
    Rng rng(config.seed);
    const long per_epoch = vlp_steps_per_epoch(data.examples.size(), config.batch_size);
    std::vector<std::size_t> order(data.examples.size());
    long step = 0;
    for (int epoch = 0; epoch < config.epochs && step < total; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (long b = 0; b < per_epoch && step < total; ++b, ++step) {
            const auto start = static_cast<std::size_t>(b) * static_cast<std::size_t>(config.batch_size);
            const auto end = (b + 1 == per_epoch) ? order.size()
                                                  : std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            nn::Matrix images(static_cast<Eigen::Index>(batch.size()), all_images.cols());
            std::vector<std::string> captions;
            for (std::size_t i = 0; i < batch.size(); ++i) {
                images.row(static_cast<Eigen::Index>(i)) = all_images.row(static_cast<Eigen::Index>(batch[i]));
                captions.push_back(data.examples[batch[i]].caption);
            }

            nn::Var v = result.model.vision.forward(images);
            nn::Var t = result.model.text.forward(captions);
            nn::Var lm = config.learnable_temperature ? multimodal_contrastive_loss(v, t, log_scale)
                                                      : multimodal_contrastive_loss(v, t, config.tau_m);
            StepRecord rec;
            rec.step = step;
            rec.lr = lr_schedule(step, config.warmup_steps, total, config.learning_rate);
            rec.contrastive = lm.scalar();
            nn::Var loss = lm;
            if (distill) {
                const nn::Matrix k = teacher->encode(captions);
                nn::Var kd = knowledge_distillation_loss(result.model.project_for_teacher(t), k, config.tau_kd);
                rec.distillation = kd.scalar();
                loss = nn::add(lm, nn::scale(kd, config.alpha));
            }
            rec.loss = loss.scalar();
            if (!std::isfinite(rec.loss)) dump_nan_batch(config, data, step, batch);

            optim.zero_grad();
            loss.backward();
            optim.step(rec.lr);
            if (config.learnable_temperature) {
                auto& s = log_scale.mutable_value()(0, 0);
                s = std::min(s, kMaxLogScale);
            }
            result.history.push_back(rec);
            if (hook) hook(rec, batch);
            if ((step + 1) % 50 == 0 || step + 1 == total) {
                spdlog::debug("train-vlp step {}/{} loss {:.5f}", step + 1, total, rec.loss);
            }
        }
        if (!config.checkpoint_dir.empty()) {
            result.model.save(config.checkpoint_dir / ("epoch_" + std::to_string(epoch + 1)));
        }
    }

    if (!config.checkpoint_dir.empty()) {
        result.model.save(config.checkpoint_dir);
        optim.save(config.checkpoint_dir / "optimizer.bin");
        write_json(config.checkpoint_dir / "train_config.json", config.to_json());
        write_loss_history(config.checkpoint_dir / "loss_history.csv", result.history);
    }
    return result;
}

}  // namespace phenovlp::vlp
