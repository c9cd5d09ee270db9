#include "clozegen/wire.hpp"

#include "clozegen/util.hpp"

namespace clozegen::wire {

ordered_json parse_json(const std::string& text, const std::string& what) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError("malformed " + what + ": " + ex.what());
    }
}

ordered_json generation_request_to_json(const GenerationRequest& req) {
    ordered_json j;
    j["context"] = req.context;
    j["max_candidates"] = req.max_candidates;
    j["seed"] = req.seed;
    j["want_attention"] = req.want_attention;
    return j;
}

GenerationRequest generation_request_from_json(const ordered_json& j) {
    GenerationRequest req;
    req.context = j.at("context").get<std::string>();
    req.max_candidates = j.at("max_candidates").get<int>();
    req.seed = j.at("seed").get<std::uint64_t>();
    req.want_attention = j.value("want_attention", false);
    return req;
}

ordered_json generation_response_to_json(const GenerationResponse& resp) {
    ordered_json j;
    j["candidates"] = resp.candidates;
    if (resp.attention) {
        ordered_json att;
        if (!resp.attention->word_scores.empty()) {
            att["word_scores"] = resp.attention->word_scores;
        }
        if (!resp.attention->tensor.empty()) {
            att["tensor"] = resp.attention->tensor;
        }
        if (!resp.attention->position_to_word.empty()) {
            att["position_to_word"] = resp.attention->position_to_word;
        }
        j["attention"] = std::move(att);
    }
    return j;
}

GenerationResponse generation_response_from_json(const ordered_json& j) {
    GenerationResponse resp;
    resp.candidates = j.at("candidates").get<std::vector<std::string>>();
    if (j.contains("attention") && !j["attention"].is_null()) {
        const auto& att = j["attention"];
        RawAttention raw;
        if (att.contains("word_scores")) {
            raw.word_scores = att["word_scores"].get<std::vector<double>>();
        }
        if (att.contains("tensor")) {
            raw.tensor =
                att["tensor"].get<std::vector<std::vector<std::vector<double>>>>();
        }
        if (att.contains("position_to_word")) {
            raw.position_to_word =
                att["position_to_word"].get<std::vector<std::size_t>>();
        }
        resp.attention = std::move(raw);
    }
    return resp;
}

ordered_json chat_prompt_to_json(const ChatPrompt& prompt) {
    ordered_json j;
    j["system"] = prompt.system;
    ordered_json shots = ordered_json::array();
    for (const auto& s : prompt.shots) {
        shots.push_back({{"user", s.user}, {"assistant", s.assistant}});
    }
    j["shots"] = std::move(shots);
    j["user"] = prompt.user;
    return j;
}

ChatPrompt chat_prompt_from_json(const ordered_json& j) {
    ChatPrompt prompt;
    prompt.system = j.at("system").get<std::string>();
    for (const auto& s : j.value("shots", ordered_json::array())) {
        prompt.shots.push_back(
            {s.at("user").get<std::string>(), s.at("assistant").get<std::string>()});
    }
    prompt.user = j.at("user").get<std::string>();
    return prompt;
}

ordered_json qa_request_to_json(const QaRequest& req) {
    ordered_json j;
    j["context"] = req.context;
    j["options"] = req.options;
    return j;
}

QaRequest qa_request_from_json(const ordered_json& j) {
    QaRequest req;
    req.context = j.at("context").get<std::string>();
    req.options = j.at("options").get<std::vector<std::string>>();
    return req;
}

ordered_json grammar_findings_to_json(const std::vector<GrammarFinding>& findings) {
    ordered_json arr = ordered_json::array();
    for (const auto& f : findings) {
        arr.push_back({{"offset", f.offset},
                       {"length", f.length},
                       {"rule_id", f.rule_id},
                       {"message", f.message}});
    }
    return arr;
}

std::vector<GrammarFinding> grammar_findings_from_json(const ordered_json& j) {
    std::vector<GrammarFinding> out;
    for (const auto& f : j) {
        out.push_back({f.at("offset").get<std::size_t>(),
                       f.at("length").get<std::size_t>(),
                       f.value("rule_id", ""), f.value("message", "")});
    }
    return out;
}

}  // namespace clozegen::wire
