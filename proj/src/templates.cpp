#include "clozegen/templates.hpp"

#include <sstream>

#include "clozegen/util.hpp"

namespace clozegen::templates {

namespace {

std::string join_lines(const std::vector<std::string>& items) {
    return join(items, "\n");
}

std::vector<ChatShot> take_shots(const std::vector<ChatShot>& all, int n) {
    if (n < 0) n = 0;
    auto count = std::min<std::size_t>(static_cast<std::size_t>(n), all.size());
    return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count)};
}

// Strips a leading list bullet from a judge response line.
std::string strip_bullet(std::string s) {
    if (s.rfind("- ", 0) == 0 || s.rfind("* ", 0) == 0) s = s.substr(2);
    return trim(s);
}

std::optional<std::vector<std::string>> parse_marker_block(
    const std::string& response, const std::string& marker) {
    auto lines = split_lines(response);
    std::ptrdiff_t start = -1;
    for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(lines.size()) - 1; i >= 0; --i) {
        if (trim(lines[static_cast<std::size_t>(i)]).rfind(marker, 0) == 0) {
            start = i;
            break;
        }
    }
    if (start < 0) return std::nullopt;

    std::vector<std::string> items;
    std::string head = trim(lines[static_cast<std::size_t>(start)]).substr(marker.size());
    if (!head.empty() && head.front() == ':') head = head.substr(1);
    head = trim(head);
    if (!head.empty()) {
        if (iequals(head, "None")) return items;
        items.push_back(strip_bullet(head));
    }
    for (std::size_t i = static_cast<std::size_t>(start) + 1; i < lines.size(); ++i) {
        std::string item = strip_bullet(trim(lines[i]));
        if (item.empty()) continue;
        if (iequals(item, "None") && items.empty()) return items;
        items.push_back(item);
    }
    return items;
}

}  // namespace

// ---------------------------------------------------------------------------
// Judge prompt assets (version v1)

const std::string& validity_filter_system() {
    static const std::string text =
        "Your task is to find every possible answer for the cloze question from the candidates provided.\n"
        "For each candidates, provide a brief explanation about the appropriateness of the candidate.\n"
        "Then, at the end, **must** provide \"Appropriate candidates\", with every candidates that could be considered as correct, seperated by new line.\n"
        "If there is no appropriate candidate, provide \"Appropriate candidates: None\".\n"
        "Evaluate each candidate independently.";
    return text;
}

const std::string& relative_difficulty_system() {
    static const std::string text =
        "Given a cloze question consisting of masked passage, four options and correct answer, evaluate the incorrect options by their **relative** difficulty.\n"
        "For each incorrect options, provide a brief explanation about their incorrectness.\n"
        "Then, at the end, you must write \"Results:\", then write down the all incorrect options in the order of **relative** difficulty.\n"
        "Start by writing the incorrect answer that is most confusing to distinguish from the correct answer.";
    return text;
}

const std::string& invalid_ratio_system() {
    static const std::string text =
        "Given a cloze question consisting of masked passage, three options and correct answer, evaluate the option if they are equally suitable or just suitable as the correct answer.\n"
        "For each options, provide a brief explanation about their incorrectness.\n"
        "Then, at the end, you must write \"Results:\", then write down the all options that equally suitable or just suitable as the answer, seperated by new line.\n"
        "If there is no options that are equally suitable or just suitable as the answer, provide \"Results: None\".";
    return text;
}

std::vector<ChatShot> validity_filter_shots(int n) {
    static const std::vector<ChatShot> all = {
        {validity_filter_user(
             "The children were very _____ about the trip to the museum.",
             {"excited", "eager", "angry", "purple"}),
         "excited: Fits naturally; being excited about a trip is the expected reading.\n"
         "eager: Also fits; eagerness about an upcoming trip is a valid reading.\n"
         "angry: Grammatical, but anger about a museum trip contradicts the context.\n"
         "purple: A color cannot describe a feeling about a trip.\n"
         "\n"
         "Appropriate candidates:\n"
         "excited\n"
         "eager"},
        {validity_filter_user(
             "She locked the door and put the _____ in her pocket.",
             {"key", "sky", "runs", "quickly"}),
         "key: The natural object used to lock a door and small enough to pocket.\n"
         "sky: Cannot be put in a pocket.\n"
         "runs: A verb form where the sentence needs a noun.\n"
         "quickly: An adverb where the sentence needs a noun.\n"
         "\n"
         "Appropriate candidates:\n"
         "key"},
    };
    return take_shots(all, n);
}

std::vector<ChatShot> relative_difficulty_shots(int n) {
    static const std::vector<ChatShot> all = {
        {relative_difficulty_user(
             "Tom went to the library to _____ a book about ancient Rome.",
             {"borrow", "lend", "paint", "eat"}, "borrow"),
         "lend: Reverses the direction of the exchange; a visitor takes books from a library rather than giving them.\n"
         "paint: Painting a book is not a purposeful library activity.\n"
         "eat: Eating a book is nonsensical in any reading.\n"
         "\n"
         "Results:\n"
         "lend\n"
         "paint\n"
         "eat"},
    };
    return take_shots(all, n);
}

std::vector<ChatShot> invalid_ratio_shots(int n) {
    static const std::vector<ChatShot> all = {
        {invalid_ratio_user(
             "The farmer stored the grain in a large _____ behind the house.",
             {"barn", "spoon", "cloud"}, "shed"),
         "barn: A barn stores grain as readily as a shed; it fits the blank equally well.\n"
         "spoon: Far too small to store grain.\n"
         "cloud: Cannot store anything.\n"
         "\n"
         "Results:\n"
         "barn"},
    };
    return take_shots(all, n);
}

std::string validity_filter_user(const std::string& context,
                                 const std::vector<std::string>& candidates) {
    return "Masked passage:\n" + context + "\n\nCandidates:\n" + join_lines(candidates);
}

std::string relative_difficulty_user(const std::string& context,
                                     const std::vector<std::string>& options,
                                     const std::string& answer) {
    return "Masked passage:\n" + context + "\n\nOptions:\n" + join_lines(options) +
           "\n\nThe answer is: " + answer;
}

std::string invalid_ratio_user(const std::string& context,
                               const std::vector<std::string>& distractors,
                               const std::string& answer) {
    return "Masked passage:\n" + context + "\n\nOptions:\n" + join_lines(distractors) +
           "\n\nAnswer: " + answer;
}

ChatPrompt render_validity_filter(const std::string& context,
                                  const std::vector<std::string>& candidates,
                                  int shots) {
    return {validity_filter_system(), validity_filter_shots(shots),
            validity_filter_user(context, candidates)};
}

ChatPrompt render_relative_difficulty(const std::string& context,
                                      const std::vector<std::string>& options,
                                      const std::string& answer, int shots) {
    return {relative_difficulty_system(), relative_difficulty_shots(shots),
            relative_difficulty_user(context, options, answer)};
}

ChatPrompt render_invalid_ratio(const std::string& context,
                                const std::vector<std::string>& distractors,
                                const std::string& answer, int shots) {
    return {invalid_ratio_system(), invalid_ratio_shots(shots),
            invalid_ratio_user(context, distractors, answer)};
}

std::optional<std::vector<std::string>> parse_appropriate_candidates(
    const std::string& response) {
    return parse_marker_block(response, "Appropriate candidates");
}

std::optional<std::vector<std::string>> parse_results_block(
    const std::string& response) {
    return parse_marker_block(response, "Results");
}

// ---------------------------------------------------------------------------
// Seq2seq task formats (version v1)

std::string dcdg_input(const std::string& passage, int count,
                       const std::string& difficulty, const std::string& answer) {
    std::ostringstream os;
    os << "generate " << count << " " << difficulty
       << " distractors | answer: " << answer << " | passage: " << passage;
    return os.str();
}

std::string dcdg_target(const std::vector<std::string>& distractors) {
    return join(distractors, kListSeparator);
}

std::optional<std::vector<std::string>> parse_dcdg_target(const std::string& target) {
    if (trim(target).empty()) return std::nullopt;
    std::vector<std::string> out;
    std::size_t pos = 0;
    const std::string sep = kListSeparator;
    while (true) {
        auto next = target.find(sep, pos);
        std::string piece = target.substr(
            pos, next == std::string::npos ? std::string::npos : next - pos);
        if (trim(piece).empty()) return std::nullopt;
        out.push_back(piece);
        if (next == std::string::npos) break;
        pos = next + sep.size();
    }
    return out;
}

std::string asde_input(const std::string& passage,
                       const std::vector<std::string>& options) {
    return "label each option as answer, easy or hard | options: " +
           join(options, kListSeparator) + " | passage: " + passage;
}

std::string asde_target(
    const std::vector<std::pair<std::string, std::string>>& labeled) {
    std::vector<std::string> parts;
    parts.reserve(labeled.size());
    for (const auto& [surface, label] : labeled) parts.push_back(surface + ": " + label);
    return join(parts, kListSeparator);
}

namespace {

bool is_known_label(const std::string& s) {
    return s == kLabelAnswer || s == kLabelEasy || s == kLabelHard;
}

// Splits "surface: label" from the right so surfaces containing ": " survive.
std::optional<std::pair<std::string, std::string>> split_labeled_item(
    const std::string& item) {
    auto pos = item.rfind(": ");
    while (pos != std::string::npos) {
        std::string label = item.substr(pos + 2);
        if (is_known_label(label)) {
            std::string surface = item.substr(0, pos);
            if (surface.empty()) return std::nullopt;
            return std::make_pair(surface, label);
        }
        pos = pos == 0 ? std::string::npos : item.rfind(": ", pos - 1);
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::vector<std::pair<std::string, std::string>>> parse_asde_target(
    const std::string& target) {
    auto pieces = parse_dcdg_target(target);
    if (!pieces) return std::nullopt;
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(pieces->size());
    for (const auto& piece : *pieces) {
        auto item = split_labeled_item(piece);
        if (!item) return std::nullopt;
        out.push_back(*item);
    }
    return out;
}

std::string ddde_input(const std::string& filled_passage) {
    return "find the inserted distractor and rate its difficulty | passage: " +
           filled_passage;
}

std::string ddde_target(const std::string& surface, const std::string& difficulty) {
    return surface + ": " + difficulty;
}

std::optional<std::pair<std::string, std::string>> parse_ddde_target(
    const std::string& target) {
    auto item = split_labeled_item(target);
    if (!item || item->second == kLabelAnswer) return std::nullopt;
    return item;
}

}  // namespace clozegen::templates
