#include "phenovlp/nn/optim.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>

#include "phenovlp/common/errors.hpp"

namespace phenovlp::nn {

namespace fs = std::filesystem;

AdamW::AdamW(NamedParams params, AdamWOptions options) : params_(std::move(params)), opt_(options) {
    for (const auto& [name, p] : params_) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Var& p = params_[i].second;
        if (!p.has_grad()) continue;
        const Matrix& g = p.grad();
        m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
        v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
        Matrix& w = p.mutable_value();
        if (opt_.weight_decay > 0.0 && w.rows() > 1 && w.cols() > 1) w *= (1.0 - lr * opt_.weight_decay);
        w.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + opt_.eps);
    }
}

void AdamW::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

void AdamW::save(const fs::path& path) const {
    std::vector<std::pair<std::string, Matrix>> tensors;
    Matrix step(1, 1);
    step(0, 0) = static_cast<double>(t_);
    tensors.emplace_back("__step__", step);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        tensors.emplace_back("m." + params_[i].first, m_[i]);
        tensors.emplace_back("v." + params_[i].first, v_[i]);
    }
    save_tensors(path, tensors);
}

void AdamW::load(const fs::path& path) {
    std::map<std::string, Matrix> stored;
    for (auto& [name, m] : load_tensors(path)) stored[name] = std::move(m);
    auto get = [&](const std::string& name, const Matrix& like) -> Matrix {
        auto it = stored.find(name);
        if (it == stored.end() || it->second.rows() != like.rows() || it->second.cols() != like.cols()) {
            throw InputError("optimizer state mismatch for " + name);
        }
        return it->second;
    };
    t_ = static_cast<long>(get("__step__", Matrix(1, 1))(0, 0));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i] = get("m." + params_[i].first, m_[i]);
        v_[i] = get("v." + params_[i].first, v_[i]);
    }
}

namespace {
constexpr char kMagic[8] = {'P', 'V', 'L', 'P', 'T', 'E', 'N', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const fs::path& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw InputError("truncated tensor file " + path.string());
    return v;
}
}  // namespace

void save_tensors(const fs::path& path, const std::vector<std::pair<std::string, Matrix>>& tensors) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint64_t>(out, tensors.size());
    for (const auto& [name, m] : tensors) {
        put<std::uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::int64_t>(out, m.rows());
        put<std::int64_t>(out, m.cols());
        out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
}

std::vector<std::pair<std::string, Matrix>> load_tensors(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + 8, kMagic)) throw InputError("not a tensor file: " + path.string());
    const auto count = take<std::uint64_t>(in, path);
    std::vector<std::pair<std::string, Matrix>> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = take<std::uint64_t>(in, path);
        if (len > 4096) throw InputError("corrupt tensor name in " + path.string());
        std::string name(len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(len));
        const auto rows = take<std::int64_t>(in, path);
        const auto cols = take<std::int64_t>(in, path);
        if (rows < 0 || cols < 0) throw InputError("corrupt tensor shape in " + path.string());
        Matrix m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
        if (!in) throw InputError("truncated tensor file " + path.string());
        out.emplace_back(std::move(name), std::move(m));
    }
    return out;
}

void save_params(const fs::path& path, const NamedParams& params) {
    std::vector<std::pair<std::string, Matrix>> tensors;
    tensors.reserve(params.size());
    for (const auto& [name, v] : params) tensors.emplace_back(name, v.value());
    save_tensors(path, tensors);
}

void load_params(const fs::path& path, NamedParams& params) {
    auto stored = load_tensors(path);
    if (stored.size() != params.size()) {
        throw InputError(path.string() + ": expected " + std::to_string(params.size()) + " tensors, found " +
                         std::to_string(stored.size()));
    }
    std::map<std::string, Matrix> by_name;
    for (auto& [name, m] : stored) by_name[name] = std::move(m);
    for (auto& [name, v] : params) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw InputError(path.string() + ": missing tensor " + name);
        if (it->second.rows() != v.rows() || it->second.cols() != v.cols()) {
            throw InputError(path.string() + ": shape mismatch for " + name);
        }
        v.mutable_value() = it->second;
    }
}

}  // namespace phenovlp::nn
