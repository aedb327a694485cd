#include "iotzsl/llm_client.hpp"

#include <cstdlib>
#include <filesystem>

#include <httplib.h>
#include <json.hpp>

using nlohmann::json;

namespace iotzsl {

std::string LlmClient::complete(const std::string& prompt) const {
  IOTZSL_REQUIRE(cfg_.configured(), ErrKind::config, "LLM client: no endpoint configured");

  httplib::Client http(cfg_.host, cfg_.port);
  http.set_connection_timeout(cfg_.timeout_seconds, 0);
  http.set_read_timeout(cfg_.timeout_seconds, 0);

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  json body;
  body["model"] = cfg_.model;
  body["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});

  auto res = http.Post(cfg_.path, headers, body.dump(), "application/json");
  IOTZSL_REQUIRE(res != nullptr, ErrKind::io,
                 "LLM client: request to " + cfg_.host + ":" + std::to_string(cfg_.port) + " failed");
  IOTZSL_REQUIRE(res->status == 200, ErrKind::io,
                 "LLM client: HTTP " + std::to_string(res->status) + ": " + res->body);
  try {
    const json j = json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrKind::io, std::string("LLM client: malformed response: ") + e.what());
  }
}

std::string hard_prompt_query(const std::vector<std::string>& class_list) {
  std::string classes;
  for (size_t i = 0; i < class_list.size(); ++i) {
    if (i) classes += ", ";
    classes += "\"" + class_list[i] + "\"";
  }
  std::string q = "The classes of an IoT sensing task are: [" + classes + "]. ";
  q += "For each class c in this list, answer the question: "
       "What are the important attributes and features to distinguish class c "
       "from all the other classes? ";
  q += "Return a JSON dictionary where each original class name is a key and "
       "the generated description is its value.";
  return q;
}

namespace {

HardPromptSet parse_llm_dictionary(const std::string& answer,
                                   const std::vector<std::string>& class_list) {
  const auto lo = answer.find('{');
  const auto hi = answer.rfind('}');
  IOTZSL_REQUIRE(lo != std::string::npos && hi != std::string::npos && hi > lo, ErrKind::io,
                 "LLM answer contains no JSON dictionary");
  json j;
  try {
    j = json::parse(answer.substr(lo, hi - lo + 1));
  } catch (const json::exception& e) {
    throw Error(ErrKind::io, std::string("LLM answer is not valid JSON: ") + e.what());
  }
  HardPromptSet set;
  set.provenance = HardPromptSet::Provenance::llm_generated;
  for (const auto& name : class_list) {
    IOTZSL_REQUIRE(j.contains(name) && j[name].is_string() && !j[name].get<std::string>().empty(),
                   ErrKind::io, "LLM answer misses class '" + name + "'");
    set.descriptions[name] = j[name].get<std::string>();
  }
  return set;
}

void require_covers(const HardPromptSet& set, const std::vector<std::string>& class_list,
                    const std::string& source) {
  for (const auto& name : class_list)
    IOTZSL_REQUIRE(set.descriptions.count(name) && !set.descriptions.at(name).empty(),
                   ErrKind::config, source + " has no description for class '" + name + "'");
}

}  // namespace

HardPromptSet generate_hard_prompts(const std::vector<std::string>& class_list,
                                    const LlmClient* client, const std::string& prompt_file,
                                    bool refresh) {
  const bool file_exists = std::filesystem::exists(prompt_file);

  if (file_exists && !refresh) {
    HardPromptSet set = HardPromptSet::from_file(prompt_file);
    require_covers(set, class_list, "prompt file " + prompt_file);
    return set;
  }

  if (client && client->config().configured()) {
    try {
      HardPromptSet set = parse_llm_dictionary(client->complete(hard_prompt_query(class_list)),
                                               class_list);
      set.save(prompt_file);
      return set;
    } catch (const Error& e) {
      warn(std::string("LLM prompt generation failed (") + e.what() + ")" +
           (file_exists ? "; falling back to the prompt file" : ""));
    }
  }

  if (file_exists) {
    HardPromptSet set = HardPromptSet::from_file(prompt_file);
    require_covers(set, class_list, "prompt file " + prompt_file);
    return set;
  }
  throw Error(ErrKind::config,
              "no hard prompts available: LLM provider unreachable/unconfigured and no prompt "
              "file at " + prompt_file);
}

}  // namespace iotzsl
