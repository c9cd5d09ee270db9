#include "clozegen/cache.hpp"

#include "clozegen/sha256.hpp"
#include "clozegen/util.hpp"
#include "clozegen/wire.hpp"

namespace clozegen::cache {

namespace {
constexpr const char* kKeyVersion = "cache/v1";
}

CallCache::CallCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path CallCache::entry_path(const std::string& digest) const {
    return dir_ / (digest + ".json");
}

std::string CallCache::get_or_compute(const std::string& key_material,
                                      const std::function<std::string()>& compute) {
    std::string digest = sha256_hex(std::string(kKeyVersion) + "\n" + key_material);
    auto path = entry_path(digest);
    {
        std::lock_guard<std::mutex> lock(mu_);
        if (std::filesystem::exists(path)) {
            ++hits_;
            return read_file(path);
        }
    }
    std::string value = compute();
    {
        std::lock_guard<std::mutex> lock(mu_);
        if (std::filesystem::exists(path)) {
            // Another thread beat us to it; its bytes are equivalent.
            ++hits_;
            return read_file(path);
        }
        ++misses_;
        atomic_write_file(path, value);
    }
    return value;
}

std::size_t CallCache::purge() {
    std::lock_guard<std::mutex> lock(mu_);
    std::size_t removed = 0;
    if (!std::filesystem::exists(dir_)) return removed;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            std::filesystem::remove(entry.path());
            ++removed;
        }
    }
    return removed;
}

// ---------------------------------------------------------------------------
// Wrappers

GenerationResponse CachedGenerationBackend::generate(const GenerationRequest& req) {
    std::string key = "generate\n" + inner_.name() + "\n" +
                      wire::generation_request_to_json(req).dump();
    std::string stored = cache_.get_or_compute(key, [&] {
        return wire::generation_response_to_json(inner_.generate(req)).dump();
    });
    return wire::generation_response_from_json(
        wire::parse_json(stored, "cached generation response"));
}

std::string CachedJudgeClient::complete(const ChatPrompt& prompt, std::uint64_t seed) {
    std::string key = "judge\n" + inner_.name() + "\nseed=" + std::to_string(seed) +
                      "\n" + prompt.render_text();
    return cache_.get_or_compute(key, [&] { return inner_.complete(prompt, seed); });
}

std::vector<double> CachedQaScorer::score_options(const QaRequest& req) {
    std::string key = "qa\n" + inner_.name() + "\n" + wire::qa_request_to_json(req).dump();
    std::string stored = cache_.get_or_compute(key, [&] {
        nlohmann::ordered_json j = inner_.score_options(req);
        return j.dump();
    });
    return wire::parse_json(stored, "cached qa scores").get<std::vector<double>>();
}

std::vector<double> CachedEmbeddingBackend::embed(const std::string& text) {
    std::string key = "embed\n" + inner_.name() + "\n" + text;
    std::string stored = cache_.get_or_compute(key, [&] {
        nlohmann::ordered_json j = inner_.embed(text);
        return j.dump();
    });
    return wire::parse_json(stored, "cached embedding").get<std::vector<double>>();
}

std::vector<GrammarFinding> CachedGrammarClient::check(const std::string& text) {
    std::string key = "grammar\n" + inner_.name() + "\n" + text;
    std::string stored = cache_.get_or_compute(key, [&] {
        return wire::grammar_findings_to_json(inner_.check(text)).dump();
    });
    return wire::grammar_findings_from_json(
        wire::parse_json(stored, "cached grammar findings"));
}

}  // namespace clozegen::cache
