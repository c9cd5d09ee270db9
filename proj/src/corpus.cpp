#include "clozegen/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace clozegen::corpus {

using nlohmann::ordered_json;

CorpusFormat corpus_format_from_string(std::string_view tag) {
    if (tag == "cloth_json") return CorpusFormat::cloth_json;
    throw ConfigError("unsupported corpus format tag: " + std::string(tag));
}

std::size_t count_blank_markers(std::string_view text) {
    std::size_t count = 0;
    for (const auto& tok : split_ws(text))
        if (tok == kBlankMarker) ++count;
    return count;
}

void validate_passage(const ClozePassage& p) {
    if (p.passage_id.empty()) throw IntegrityError("passage with empty passage_id");
    std::size_t markers = count_blank_markers(p.text);
    if (markers != p.blanks.size()) {
        std::ostringstream msg;
        msg << "passage " << p.passage_id << ": " << markers << " blank markers but "
            << p.blanks.size() << " blank records";
        throw IntegrityError(msg.str());
    }
    for (std::size_t i = 0; i < p.blanks.size(); ++i) {
        const auto& b = p.blanks[i];
        if (b.blank_index != static_cast<int>(i))
            throw IntegrityError("passage " + p.passage_id + ": blank_index out of order");
        if (b.answer.empty())
            throw IntegrityError("passage " + p.passage_id + ": empty answer at blank " +
                                 std::to_string(i));
        std::set<std::string> seen;
        for (const auto& d : b.original_distractors) {
            if (d == b.answer)
                throw IntegrityError("passage " + p.passage_id + ": answer listed among distractors at blank " +
                                     std::to_string(i));
            if (!seen.insert(d).second)
                throw IntegrityError("passage " + p.passage_id + ": duplicate distractor \"" + d +
                                     "\" at blank " + std::to_string(i));
        }
    }
}

void validate_question(const ClozeQuestion& q) {
    if (count_blank_markers(q.context) != 1)
        throw IntegrityError("question " + q.passage_id + "#" + std::to_string(q.blank_index) +
                             ": context must contain exactly one blank marker");
    if (q.answer.empty())
        throw IntegrityError("question " + q.passage_id + "#" + std::to_string(q.blank_index) +
                             ": empty answer");
}

namespace {

// Replaces every maximal run of underscores with the canonical marker and
// canonicalizes whitespace. Natural-language passages do not contain
// underscores otherwise, so runs of any length are treated as blanks.
std::string normalize_article(std::string_view article) {
    std::string spaced;
    spaced.reserve(article.size() + 16);
    std::size_t i = 0;
    while (i < article.size()) {
        if (article[i] == '_') {
            std::size_t j = i;
            while (j < article.size() && article[j] == '_') ++j;
            spaced.push_back(' ');
            spaced.append(kBlankMarker);
            spaced.push_back(' ');
            i = j;
        } else {
            spaced.push_back(article[i]);
            ++i;
        }
    }
    return normalize_ws(spaced);
}

int answer_letter_to_index(const std::string& letter, const std::string& passage_id,
                           std::size_t blank) {
    if (letter.size() != 1)
        throw ParseError("passage " + passage_id + ": answers[" + std::to_string(blank) +
                         "] is not a single letter");
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(letter[0])));
    if (c < 'A' || c > 'Z')
        throw ParseError("passage " + passage_id + ": answers[" + std::to_string(blank) +
                         "] is not a letter");
    return c - 'A';
}

ClozePassage passage_from_record(const ordered_json& rec, const std::string& fallback_id) {
    std::string id = fallback_id;
    if (rec.contains("id") && rec["id"].is_string()) id = rec["id"].get<std::string>();
    if (id.empty()) throw ParseError("passage record without id");

    if (!rec.contains("article") || !rec["article"].is_string())
        throw ParseError("passage " + id + ": missing field article");
    if (!rec.contains("options") || !rec["options"].is_array())
        throw ParseError("passage " + id + ": missing field options");
    if (!rec.contains("answers") || !rec["answers"].is_array())
        throw ParseError("passage " + id + ": missing field answers");

    ClozePassage p;
    p.passage_id = id;
    p.text = normalize_article(rec["article"].get<std::string>());

    const auto& options = rec["options"];
    const auto& answers = rec["answers"];
    if (options.size() != answers.size())
        throw ParseError("passage " + id + ": options and answers lengths differ");

    for (std::size_t b = 0; b < options.size(); ++b) {
        if (!options[b].is_array())
            throw ParseError("passage " + id + ": options[" + std::to_string(b) +
                             "] is not a list");
        std::vector<std::string> opts;
        for (const auto& o : options[b]) {
            if (!o.is_string())
                throw ParseError("passage " + id + ": non-string option at blank " +
                                 std::to_string(b));
            opts.push_back(trim(o.get<std::string>()));
        }
        int ans_idx = answer_letter_to_index(answers[b].get<std::string>(), id, b);
        if (ans_idx >= static_cast<int>(opts.size()))
            throw IntegrityError("passage " + id + ": answer letter at blank " +
                                 std::to_string(b) + " has no matching option");
        BlankSlot slot;
        slot.blank_index = static_cast<int>(b);
        slot.answer = opts[static_cast<std::size_t>(ans_idx)];
        for (std::size_t o = 0; o < opts.size(); ++o) {
            if (static_cast<int>(o) == ans_idx) continue;
            slot.original_distractors.push_back(opts[o]);
        }
        p.blanks.push_back(std::move(slot));
    }
    validate_passage(p);
    return p;
}

void append_records(const std::filesystem::path& file, std::vector<ClozePassage>& out) {
    std::string content = read_file(file);
    std::string stem = file.stem().string();
    if (file.extension() == ".jsonl") {
        auto lines = split_lines(content);
        std::size_t row = 0;
        for (const auto& line : lines) {
            if (trim(line).empty()) continue;
            ordered_json rec;
            try {
                rec = ordered_json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(file.string() + ": bad JSON on line " + std::to_string(row + 1) +
                                 ": " + e.what());
            }
            out.push_back(passage_from_record(rec, stem + "-" + std::to_string(row)));
            ++row;
        }
        return;
    }
    ordered_json doc;
    try {
        doc = ordered_json::parse(content);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(file.string() + ": bad JSON: " + std::string(e.what()));
    }
    if (doc.is_array()) {
        std::size_t row = 0;
        for (const auto& rec : doc) {
            out.push_back(passage_from_record(rec, stem + "-" + std::to_string(row)));
            ++row;
        }
    } else {
        out.push_back(passage_from_record(doc, stem));
    }
}

}  // namespace

std::vector<ClozePassage> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    (void)format;  // one format today; the tag keeps the call sites honest
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw ConfigError("corpus path does not exist: " + path.string());

    std::vector<ClozePassage> passages;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            auto ext = entry.path().extension();
            if (ext == ".json" || ext == ".jsonl") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) append_records(f, passages);
    } else {
        append_records(path, passages);
    }

    std::set<std::string> ids;
    for (const auto& p : passages) {
        if (!ids.insert(p.passage_id).second)
            throw IntegrityError("duplicate passage_id in corpus: " + p.passage_id);
    }
    return passages;
}

std::string resolve_all_blanks(const ClozePassage& passage) {
    auto tokens = split_ws(passage.text);
    std::size_t next_blank = 0;
    for (auto& tok : tokens) {
        if (tok == kBlankMarker) tok = passage.blanks[next_blank++].answer;
    }
    return join(tokens, " ");
}

std::vector<ClozeQuestion> make_questions(const ClozePassage& passage) {
    validate_passage(passage);
    auto tokens = split_ws(passage.text);
    std::vector<std::size_t> marker_pos;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == kBlankMarker) marker_pos.push_back(i);

    std::vector<ClozeQuestion> out;
    out.reserve(passage.blanks.size());
    for (std::size_t b = 0; b < passage.blanks.size(); ++b) {
        auto ctx = tokens;
        for (std::size_t m = 0; m < marker_pos.size(); ++m) {
            if (m == b) continue;
            ctx[marker_pos[m]] = passage.blanks[m].answer;
        }
        ClozeQuestion q;
        q.passage_id = passage.passage_id;
        q.blank_index = static_cast<int>(b);
        q.context = join(ctx, " ");
        q.answer = passage.blanks[b].answer;
        q.original_distractors = passage.blanks[b].original_distractors;
        validate_question(q);
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<FoldAssignment> assign_folds(std::span<const ClozePassage> passages, int k,
                                         std::uint64_t seed) {
    if (k < 2) throw ConfigError("assign_folds: k must be >= 2");
    if (passages.empty()) throw ConfigError("assign_folds: empty corpus");
    if (static_cast<std::size_t>(k) > passages.size())
        throw ConfigError("assign_folds: k exceeds passage count");

    std::vector<std::size_t> order(passages.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    shuffle_in_place(order, rng);

    const std::size_t n = passages.size();
    const std::size_t base = n / static_cast<std::size_t>(k);
    const std::size_t rem = n % static_cast<std::size_t>(k);

    std::vector<FoldAssignment> out(n);
    std::size_t cursor = 0;
    for (int f = 0; f < k; ++f) {
        std::size_t size = base + (static_cast<std::size_t>(f) < rem ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j, ++cursor) {
            std::size_t orig = order[cursor];
            out[orig] = FoldAssignment{passages[orig].passage_id, f};
        }
    }
    return out;
}

ClozeQuestion corrupt_for_robustness(const ClozeQuestion& question, double rate,
                                     std::uint64_t seed) {
    if (rate < 0.0 || rate > 1.0) throw ConfigError("corruption rate must lie in [0,1]");
    auto tokens = split_ws(question.context);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] != kBlankMarker) eligible.push_back(i);

    std::size_t n_remove = static_cast<std::size_t>(rate * static_cast<double>(eligible.size()));
    n_remove = std::min(n_remove, eligible.size());
    if (n_remove == 0) return question;

    Rng rng(seed);
    auto picks = sample_indices(eligible.size(), n_remove, rng);
    std::vector<bool> removed(tokens.size(), false);
    for (std::size_t p : picks) removed[eligible[p]] = true;

    std::vector<std::string> survivors;
    survivors.reserve(tokens.size() - n_remove);
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (!removed[i]) survivors.push_back(tokens[i]);

    ClozeQuestion out = question;
    out.context = join(survivors, " ");
    return out;
}

namespace {
constexpr const char* kQuestionSchema = "clozegen/question/v1";
}

std::string question_to_jsonl_line(const ClozeQuestion& q) {
    ordered_json j;
    j["schema"] = kQuestionSchema;
    j["passage_id"] = q.passage_id;
    j["blank_index"] = q.blank_index;
    j["context"] = q.context;
    j["answer"] = q.answer;
    j["original_distractors"] = q.original_distractors;
    return j.dump();
}

ClozeQuestion question_from_jsonl_line(const std::string& line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad question record: ") + e.what());
    }
    ClozeQuestion q;
    q.passage_id = j.at("passage_id").get<std::string>();
    q.blank_index = j.at("blank_index").get<int>();
    q.context = j.at("context").get<std::string>();
    q.answer = j.at("answer").get<std::string>();
    q.original_distractors = j.at("original_distractors").get<std::vector<std::string>>();
    return q;
}

void write_questions_jsonl(const std::filesystem::path& path,
                           std::span<const ClozeQuestion> questions) {
    std::string buf;
    for (const auto& q : questions) {
        buf += question_to_jsonl_line(q);
        buf += '\n';
    }
    atomic_write_file(path, buf);
}

std::vector<ClozeQuestion> read_questions_jsonl(const std::filesystem::path& path) {
    std::vector<ClozeQuestion> out;
    for (const auto& line : split_lines(read_file(path))) {
        if (trim(line).empty()) continue;
        out.push_back(question_from_jsonl_line(line));
    }
    return out;
}

}  // namespace clozegen::corpus
