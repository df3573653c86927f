#include "phenovlp/corpus/model_clients.hpp"

#include <cstdlib>
#include <regex>

#include <httplib.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/common/text.hpp"

namespace phenovlp::corpus {

namespace {

std::string between(const std::string& s, std::string_view open, std::string_view close, std::size_t from = 0) {
    const auto a = s.find(open, from);
    if (a == std::string::npos) return {};
    const auto start = a + open.size();
    const auto b = s.find(close, start);
    if (b == std::string::npos) return {};
    return s.substr(start, b - start);
}

std::string guess_modality(std::string_view caption) {
    static const std::vector<std::pair<std::string, std::string>> words{
        {"fundus", "fundus photograph"}, {"oct", "OCT"},           {"mri", "MRI"},
        {"ct", "CT"},                    {"histology", "histology"}, {"dermoscopy", "dermoscopy"},
        {"slit", "slit-lamp photograph"}, {"photograph", "clinical photograph"}, {"photo", "clinical photograph"}};
    const auto tokens = text::word_tokens(caption);
    for (const auto& [word, modality] : words)
        if (std::find(tokens.begin(), tokens.end(), word) != tokens.end()) return modality;
    return "unknown";
}

}  // namespace

std::string MockRefiner::complete(const std::string& prompt) const {
    const auto head = prompt.find("**Main Caption:**");
    const std::string caption = text::trim(between(prompt, "---\n", "\n    ---", head == std::string::npos ? 0 : head));
    static const std::regex marker(R"(Panel ([A-Za-z0-9]+):)");
    json out = json::object();
    std::vector<std::pair<std::string, std::size_t>> marks;  // key, text start
    std::vector<std::size_t> starts;
    for (auto it = std::sregex_iterator(caption.begin(), caption.end(), marker); it != std::sregex_iterator(); ++it) {
        marks.emplace_back((*it)[1].str(), static_cast<std::size_t>(it->position() + it->length()));
        starts.push_back(static_cast<std::size_t>(it->position()));
    }
    if (marks.empty()) {
        out["main"] = {{"enhanced_caption", caption}, {"modality", guess_modality(caption)}};
        return out.dump(2);
    }
    for (std::size_t i = 0; i < marks.size(); ++i) {
        const auto end = i + 1 < marks.size() ? starts[i + 1] : caption.size();
        const auto piece = text::trim(std::string_view(caption).substr(marks[i].second, end - marks[i].second));
        out[marks[i].first] = {{"enhanced_caption", piece}, {"modality", guess_modality(piece)}};
    }
    return "```json\n" + out.dump(2) + "\n```";
}

std::string MockAligner::align(const std::string& prompt, const vision::Image& overlay) const {
    if (overlay.empty()) throw TransportError("mock aligner received no image");
    const std::string block = between(prompt, "An English caption describing the image content: \"", "\"\n\nImportant notes");
    json out = json::array();
    for (const auto& line : text::split(block, '\n')) {
        const auto t = text::trim(line);
        if (t.empty()) continue;
        const auto close = t.find(") ");
        const std::string chunk = t[0] == '(' && close != std::string::npos ? t.substr(close + 2) : t;
        out.push_back({{"bbox_id", "box_" + std::to_string(out.size() + 1)}, {"caption_chunk", chunk}});
    }
    return out.dump();
}

std::optional<HttpClientConfig> HttpClientConfig::from_env(const std::string& prefix) {
    const char* url = std::getenv(("PHENOVLP_" + prefix + "_URL").c_str());
    if (!url || !*url) return std::nullopt;
    HttpClientConfig c;
    c.url = url;
    if (const char* key = std::getenv(("PHENOVLP_" + prefix + "_API_KEY").c_str())) c.api_key = key;
    return c;
}

HttpModelClient::HttpModelClient(HttpClientConfig config) : config_(std::move(config)) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.url, m, url_re)) throw ParameterError("model endpoint is not an http(s) URL: " + config_.url);
    base_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
    if (config_.retries < 0 || config_.timeout_seconds <= 0) throw ParameterError("model client needs retries >= 0 and timeout > 0");
}

std::string HttpModelClient::post(const std::string& body) const {
    httplib::Client client(base_);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
        } else if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            try {
                return json::parse(res->body).at("text").get<std::string>();
            } catch (const json::exception& e) {
                last_error = std::string("malformed reply: ") + e.what();
            }
        }
        spdlog::warn("model request to {}{} failed (attempt {}): {}", base_, path_, attempt + 1, last_error);
    }
    throw TransportError(base_ + path_ + ": " + last_error);
}

std::string HttpModelClient::complete(const std::string& prompt) const {
    return post(json{{"prompt", prompt}}.dump());
}

std::string HttpModelClient::align(const std::string& prompt, const vision::Image& overlay) const {
    return post(json{{"prompt", prompt}, {"image_b64", base64_encode(vision::encode_png(overlay))}}.dump());
}

std::string base64_encode(const std::string& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

}  // namespace phenovlp::corpus
