#pragma once

// Prompt templates. Defaults are compiled in from prompts/*.txt; a directory
// holding files with the same names overrides them one by one.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "levelnavi/llm_gateway.hpp"

namespace levelnavi {

struct Exemplar {
    std::vector<ChatMessage> messages;
};

struct PromptSet {
    std::string planner_system;
    std::string planner_question;       // {question}
    std::string planner_feedback;       // {iteration} {pairs}
    std::string planner_feedback_pair;  // {sub_question} {answer}
    std::vector<Exemplar> planner_exemplars;

    std::string searcher_system;
    std::string searcher_level0;    // {sub_question}
    std::string searcher_level1;    // {sub_question} {snippets} {max_open}
    std::string searcher_level2;    // {sub_question} {pages}
    std::string searcher_fallback;  // {sub_question} {material}

    std::string judge_system;
    std::string judge_user;  // {question} {gold} {response}
    std::string question_gen_system;
    std::string question_gen_user;  // {response} {n}

    static PromptSet defaults();
    // Starts from the defaults and replaces every template file found in `dir`.
    static PromptSet load(const std::filesystem::path& dir);
};

std::vector<Exemplar> parse_exemplars(std::string_view json_text);

// Section headers of the planner instructions. A final answer that contains
// one of them is echoing the prompt rather than answering.
std::vector<std::string> default_sentinel_markers();

}  // namespace levelnavi
