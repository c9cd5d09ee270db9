#include "clozegen/stub_backends.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "clozegen/templates.hpp"
#include "clozegen/util.hpp"

namespace clozegen::stubs {

namespace {

double unit_from_hash(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace

std::string pseudo_word(std::uint64_t state, std::size_t len) {
    std::string out;
    out.reserve(len);
    std::uint64_t x = splitmix64(state);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(static_cast<char>('a' + (x % 26)));
        x = splitmix64(x);
    }
    return out;
}

// ---------------------------------------------------------------------------
// TableGenerationBackend

void TableGenerationBackend::set_response(const std::string& context,
                                          GenerationResponse resp) {
    table_[context] = std::move(resp);
}

void TableGenerationBackend::set_default(GenerationResponse resp) {
    default_ = std::move(resp);
}

GenerationResponse TableGenerationBackend::generate(const GenerationRequest& req) {
    ++calls_;
    auto it = table_.find(req.context);
    if (it != table_.end()) return it->second;
    if (default_) return *default_;
    throw BackendError("table-gen: no scripted response for context");
}

// ---------------------------------------------------------------------------
// HashGenerationBackend

GenerationResponse HashGenerationBackend::generate(const GenerationRequest& req) {
    ++calls_;
    GenerationResponse resp;
    std::uint64_t base = mix_seed(fnv1a64(req.context), req.seed);
    resp.candidates.reserve(static_cast<std::size_t>(std::max(req.max_candidates, 0)));
    for (int j = 0; j < req.max_candidates; ++j) {
        resp.candidates.push_back(
            pseudo_word(mix_seed(base, static_cast<std::uint64_t>(j))));
    }
    return resp;
}

// ---------------------------------------------------------------------------
// SyntheticBackend

double SyntheticBackend::word_weight(std::string_view surface) {
    if (surface == kBlankMarker) return 0.0;
    double u = unit_from_hash(splitmix64(fnv1a64(surface)));
    return u * u * u * u;
}

SyntheticBackend::SyntheticBackend(std::vector<corpus::ClozeQuestion> questions,
                                   int window)
    : window_(window) {
    for (const auto& q : questions) {
        auto tokens = split_ws(q.context);
        Entry e;
        e.answer = q.answer;
        for (const auto& t : tokens) e.total_mass += word_weight(t);
        auto sig = signature(tokens);
        auto [it, inserted] = by_signature_.emplace(std::move(sig), std::move(e));
        if (!inserted) {
            throw IntegrityError(
                "synthetic backend: blank-window signature collision for passage " +
                q.passage_id);
        }
    }
}

std::string SyntheticBackend::signature(const std::vector<std::string>& tokens) const {
    auto marker = std::find(tokens.begin(), tokens.end(), std::string(kBlankMarker));
    if (marker == tokens.end()) {
        throw BackendError("synthetic backend: context has no blank marker");
    }
    auto idx = static_cast<std::size_t>(marker - tokens.begin());
    std::size_t lo = idx >= static_cast<std::size_t>(window_)
                         ? idx - static_cast<std::size_t>(window_)
                         : 0;
    std::size_t hi = std::min(tokens.size(), idx + static_cast<std::size_t>(window_) + 1);
    std::vector<std::string> window(tokens.begin() + static_cast<std::ptrdiff_t>(lo),
                                    tokens.begin() + static_cast<std::ptrdiff_t>(hi));
    return join(window, " ");
}

const SyntheticBackend::Entry& SyntheticBackend::resolve(
    const std::vector<std::string>& tokens) const {
    auto it = by_signature_.find(signature(tokens));
    if (it == by_signature_.end()) {
        throw BackendError("synthetic backend: unknown question (blank-window lookup failed)");
    }
    return it->second;
}

GenerationResponse SyntheticBackend::generate(const GenerationRequest& req) {
    ++calls_;
    auto tokens = split_ws(req.context);
    const Entry& entry = resolve(tokens);

    GenerationResponse resp;
    if (req.want_attention) {
        RawAttention att;
        att.word_scores.reserve(tokens.size());
        for (const auto& t : tokens) att.word_scores.push_back(word_weight(t));
        resp.attention = std::move(att);
    }

    double surviving = 0.0;
    for (const auto& t : tokens) surviving += word_weight(t);
    double p = entry.total_mass > 0.0 ? surviving / entry.total_mass : 1.0;

    int n = std::max(req.max_candidates, 0);
    std::uint64_t base = mix_seed(fnv1a64(req.context), req.seed);
    for (int j = 0; j < n; ++j) {
        double quantile = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
        if (quantile < p) {
            resp.candidates.push_back(entry.answer);
        } else {
            std::string filler = pseudo_word(mix_seed(base, static_cast<std::uint64_t>(j)));
            if (iequals(filler, entry.answer)) filler += "x";
            resp.candidates.push_back(std::move(filler));
        }
    }
    return resp;
}

// ---------------------------------------------------------------------------
// Judges

std::string SequenceJudgeClient::complete(const ChatPrompt&, std::uint64_t) {
    std::size_t i = next_.fetch_add(1);
    if (responses_.empty()) throw BackendError("sequence-judge: no responses scripted");
    if (i >= responses_.size()) i = responses_.size() - 1;
    return responses_[i];
}

std::vector<std::string> block_after_header(const std::string& user_body,
                                            const std::string& header) {
    auto lines = split_lines(user_body);
    std::vector<std::string> out;
    bool in_block = false;
    for (const auto& raw : lines) {
        std::string line = trim(raw);
        if (!in_block) {
            if (line == header) in_block = true;
            continue;
        }
        if (line.empty()) break;
        out.push_back(line);
    }
    return out;
}

std::optional<std::string> line_after_prefix(const std::string& user_body,
                                             const std::string& prefix) {
    for (const auto& raw : split_lines(user_body)) {
        std::string line = trim(raw);
        if (line.rfind(prefix, 0) == 0) return trim(line.substr(prefix.size()));
    }
    return std::nullopt;
}

bool HashValidityJudge::would_flag(const std::string& candidate) const {
    std::uint64_t h = splitmix64(mix_seed(fnv1a64(to_lower_ascii(candidate)), salt_));
    return static_cast<int>(h % 100) < percent_;
}

std::string HashValidityJudge::complete(const ChatPrompt& prompt, std::uint64_t) {
    ++calls_;
    auto candidates = block_after_header(prompt.user, "Candidates:");
    std::ostringstream os;
    std::vector<std::string> flagged;
    for (const auto& c : candidates) {
        bool flag = would_flag(c);
        os << c << ": " << (flag ? "could fill the blank correctly." : "does not fit the context.")
           << "\n";
        if (flag) flagged.push_back(c);
    }
    os << "\n";
    if (flagged.empty()) {
        os << "Appropriate candidates: None";
    } else {
        os << "Appropriate candidates:\n" << join(flagged, "\n");
    }
    return os.str();
}

std::string HashRelativeJudge::complete(const ChatPrompt& prompt, std::uint64_t) {
    auto options = block_after_header(prompt.user, "Options:");
    auto answer = line_after_prefix(prompt.user, "The answer is:");
    std::vector<std::string> incorrect;
    for (const auto& o : options) {
        if (!answer || !iequals(o, *answer)) incorrect.push_back(o);
    }
    std::stable_sort(incorrect.begin(), incorrect.end(),
                     [&](const std::string& a, const std::string& b) {
                         return splitmix64(mix_seed(fnv1a64(a), salt_)) <
                                splitmix64(mix_seed(fnv1a64(b), salt_));
                     });
    std::ostringstream os;
    for (const auto& o : incorrect) os << o << ": does not fit the blank.\n";
    os << "\nResults:\n" << join(incorrect, "\n");
    return os.str();
}

bool HashInvalidJudge::would_flag(const std::string& option) const {
    std::uint64_t h = splitmix64(mix_seed(fnv1a64(to_lower_ascii(option)), salt_));
    return static_cast<int>(h % 100) < percent_;
}

std::string HashInvalidJudge::complete(const ChatPrompt& prompt, std::uint64_t) {
    auto options = block_after_header(prompt.user, "Options:");
    std::vector<std::string> flagged;
    std::ostringstream os;
    for (const auto& o : options) {
        bool flag = would_flag(o);
        os << o << ": " << (flag ? "fits as well as the answer." : "clearly incorrect.") << "\n";
        if (flag) flagged.push_back(o);
    }
    os << "\n";
    if (flagged.empty()) {
        os << "Results: None";
    } else {
        os << "Results:\n" << join(flagged, "\n");
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// QA scorers

std::vector<double> HashQaScorer::score_options(const QaRequest& req) {
    ++calls_;
    std::vector<double> out;
    out.reserve(req.options.size());
    std::uint64_t ctx = mix_seed(fnv1a64(req.context), mix_seed(fnv1a64(tag_), salt_));
    for (const auto& opt : req.options) {
        std::uint64_t h = splitmix64(mix_seed(ctx, fnv1a64(to_lower_ascii(opt))));
        double u = unit_from_hash(h);
        double score = std::pow(u, 8.0);
        out.push_back(std::max(score, 1e-9));
    }
    return out;
}

std::vector<double> TableQaScorer::score_options(const QaRequest& req) {
    std::vector<double> out;
    out.reserve(req.options.size());
    for (const auto& opt : req.options) {
        auto it = table_.find(opt);
        if (it != table_.end()) {
            out.push_back(it->second);
        } else if (default_) {
            out.push_back(*default_);
        } else {
            throw BackendError("table-qa: no score for option '" + opt + "'");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embeddings

std::vector<double> HashEmbeddingBackend::embed(const std::string& text) {
    ++calls_;
    std::vector<double> v(dim_);
    std::uint64_t x = mix_seed(fnv1a64(text), salt_);
    double norm2 = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
        x = splitmix64(x);
        v[i] = unit_from_hash(x) * 2.0 - 1.0;
        norm2 += v[i] * v[i];
    }
    double norm = std::sqrt(norm2);
    if (norm == 0.0) {
        v[0] = 1.0;
        return v;
    }
    for (auto& c : v) c /= norm;
    return v;
}

std::vector<double> TableEmbeddingBackend::embed(const std::string& text) {
    auto it = table_.find(text);
    if (it != table_.end()) return it->second;
    if (fallback_dim_) {
        HashEmbeddingBackend fallback(*fallback_dim_);
        return fallback.embed(text);
    }
    throw BackendError("table-embed: no vector for '" + text + "'");
}

// ---------------------------------------------------------------------------
// Grammar

WordListGrammarClient::WordListGrammarClient(std::set<std::string> bad_words) {
    for (const auto& w : bad_words) bad_words_.insert(to_lower_ascii(w));
}

std::vector<GrammarFinding> WordListGrammarClient::check(const std::string& text) {
    std::vector<GrammarFinding> findings;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) {
            std::string token = to_lower_ascii(text.substr(start, i - start));
            if (bad_words_.count(token)) {
                findings.push_back({start, i - start, "WORDLIST", "flagged word: " + token});
            }
        }
    }
    return findings;
}

}  // namespace clozegen::stubs
