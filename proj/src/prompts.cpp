#include "levelnavi/prompts.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <utility>

namespace levelnavi {

namespace {

const std::map<std::string, std::string_view>& embedded() {
    static const std::map<std::string, std::string_view> files{
#include "prompts_embedded.inc"
    };
    return files;
}

std::string strip_final_newline(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

Role parse_role(const std::string& r) {
    if (r == "system") return Role::system;
    if (r == "assistant") return Role::assistant;
    if (r == "tool") return Role::tool;
    return Role::user;
}

template <typename Lookup>
PromptSet assemble(Lookup&& get) {
    PromptSet p;
    p.planner_system = get("planner_system.txt");
    p.planner_question = get("planner_question.txt");
    p.planner_feedback = get("planner_feedback.txt");
    p.planner_feedback_pair = get("planner_feedback_pair.txt");
    p.planner_exemplars = parse_exemplars(get("planner_exemplars.json"));
    p.searcher_system = get("searcher_system.txt");
    p.searcher_level0 = get("searcher_level0.txt");
    p.searcher_level1 = get("searcher_level1.txt");
    p.searcher_level2 = get("searcher_level2.txt");
    p.searcher_fallback = get("searcher_fallback.txt");
    p.judge_system = get("judge_system.txt");
    p.judge_user = get("judge_user.txt");
    p.question_gen_system = get("question_gen_system.txt");
    p.question_gen_user = get("question_gen_user.txt");
    return p;
}

}  // namespace

std::vector<Exemplar> parse_exemplars(std::string_view json_text) {
    json arr = json::parse(json_text, nullptr, false);
    if (!arr.is_array()) throw ConfigError("planner exemplars must be a JSON array");
    std::vector<Exemplar> out;
    for (const auto& ex : arr) {
        Exemplar e;
        for (const auto& m : ex.at("messages"))
            e.messages.push_back({parse_role(m.value("role", "user")), m.value("content", ""), {}, {}});
        out.push_back(std::move(e));
    }
    return out;
}

PromptSet PromptSet::defaults() {
    return assemble([](const std::string& name) {
        auto it = embedded().find(name);
        if (it == embedded().end()) throw ConfigError("missing built-in prompt " + name);
        return strip_final_newline(std::string(it->second));
    });
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("prompt directory not found: " + dir.string());
    return assemble([&](const std::string& name) {
        std::filesystem::path file = dir / name;
        if (std::filesystem::exists(file)) {
            std::ifstream in(file, std::ios::binary);
            std::ostringstream buf;
            buf << in.rdbuf();
            return strip_final_newline(buf.str());
        }
        return strip_final_newline(std::string(embedded().at(name)));
    });
}

std::vector<std::string> default_sentinel_markers() {
    return {"【规则】", "【输出格式】", "【检索反馈", "\"sub_questions\"", "\"done\":", "用户问题："};
}

}  // namespace levelnavi
