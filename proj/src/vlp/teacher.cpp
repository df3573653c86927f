#include "phenovlp/vlp/teacher.hpp"

#include <algorithm>
#include <mutex>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/hash.hpp"

namespace phenovlp::vlp {

std::uint64_t TeacherCache::key(std::string_view caption) { return fnv1a(caption); }

bool TeacherCache::lookup(std::string_view caption, Eigen::RowVectorXd& out) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key(caption));
    if (it == entries_.end()) return false;
    out = it->second;
    return true;
}

void TeacherCache::insert(std::string_view caption, const Eigen::RowVectorXd& embedding) {
    std::unique_lock lock(mutex_);
    entries_.try_emplace(key(caption), embedding);
}

std::size_t TeacherCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

void TeacherCache::save(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    std::vector<std::uint64_t> keys;
    keys.reserve(entries_.size());
    for (const auto& [k, v] : entries_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    std::vector<json> rows;
    rows.reserve(keys.size());
    for (auto k : keys) {
        const auto& v = entries_.at(k);
        rows.push_back(json{{"key", hex64(k)}, {"embedding", std::vector<double>(v.data(), v.data() + v.size())}});
    }
    write_jsonl(path, rows);
}

void TeacherCache::load(const std::filesystem::path& path) {
    std::unique_lock lock(mutex_);
    read_jsonl(path, [&](const json& row, std::size_t line) {
        const auto hex = row.at("key").get<std::string>();
        std::uint64_t k = 0;
        try {
            k = std::stoull(hex, nullptr, 16);
        } catch (const std::exception&) {
            throw InputError(path.string() + ":" + std::to_string(line) + ": bad cache key " + hex);
        }
        const auto values = row.at("embedding").get<std::vector<double>>();
        entries_.try_emplace(k, Eigen::Map<const Eigen::RowVectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
    });
}

CachedTeacher::CachedTeacher(std::shared_ptr<const TeacherHandle> inner, std::shared_ptr<TeacherCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
    if (!inner_ || !cache_) throw ParameterError("cached teacher needs a teacher and a cache");
}

nn::Matrix CachedTeacher::encode(std::span<const std::string> captions) const {
    nn::Matrix out(static_cast<Eigen::Index>(captions.size()), inner_->dim());
    // Misses are encoded once per distinct caption, even when repeated in the batch.
    std::vector<std::string> missing;
    std::unordered_map<std::string_view, std::size_t> missing_index;
    std::vector<std::pair<Eigen::Index, std::size_t>> fill;
    Eigen::RowVectorXd row;
    for (std::size_t i = 0; i < captions.size(); ++i) {
        if (cache_->lookup(captions[i], row) && row.size() == out.cols()) {
            out.row(static_cast<Eigen::Index>(i)) = row;
            continue;
        }
        auto [it, added] = missing_index.try_emplace(captions[i], missing.size());
        if (added) missing.push_back(captions[i]);
        fill.emplace_back(static_cast<Eigen::Index>(i), it->second);
    }
    if (!missing.empty()) {
        const nn::Matrix fresh = inner_->encode(missing);
        for (std::size_t j = 0; j < missing.size(); ++j) cache_->insert(missing[j], fresh.row(static_cast<Eigen::Index>(j)));
        for (const auto& [r, j] : fill) out.row(r) = fresh.row(static_cast<Eigen::Index>(j));
        misses_ += missing.size();
    }
    return out;
}

}  // namespace phenovlp::vlp
