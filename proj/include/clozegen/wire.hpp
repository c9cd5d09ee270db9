#pragma once

// JSON wire forms for backend requests and responses, shared by the HTTP
// adapters, the HTTP test server, and the call cache.

#include <json.hpp>

#include "clozegen/backends.hpp"

namespace clozegen::wire {

using ordered_json = nlohmann::ordered_json;

ordered_json generation_request_to_json(const GenerationRequest& req);
GenerationRequest generation_request_from_json(const ordered_json& j);

ordered_json generation_response_to_json(const GenerationResponse& resp);
GenerationResponse generation_response_from_json(const ordered_json& j);

ordered_json chat_prompt_to_json(const ChatPrompt& prompt);
ChatPrompt chat_prompt_from_json(const ordered_json& j);

ordered_json qa_request_to_json(const QaRequest& req);
QaRequest qa_request_from_json(const ordered_json& j);

ordered_json grammar_findings_to_json(const std::vector<GrammarFinding>& findings);
std::vector<GrammarFinding> grammar_findings_from_json(const ordered_json& j);

// Throws ParseError with a named field on malformed payloads.
ordered_json parse_json(const std::string& text, const std::string& what);

}  // namespace clozegen::wire
