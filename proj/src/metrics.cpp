#include "levelnavi/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "levelnavi/text_util.hpp"

namespace levelnavi {

JudgeRangeError::JudgeRangeError(long long score)
    : Error(fmt::format("judge score {} outside 1..10", score)), score_(score) {}

namespace {

void require_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(fmt::format("{} = {} is outside [0, 1]", name, v));
}

}  // namespace

double searcher_decay(double s_c) {
    if (!(s_c >= 0.0) || std::isinf(s_c)) throw DomainError(fmt::format("s_c = {} must be a finite value >= 0", s_c));
    return 10.0 * std::exp(-s_c);
}

double final_score(double s_co, double s_simi, double s_rele, double s_c) {
    require_unit(s_co, "s_co");
    require_unit(s_simi, "s_simi");
    require_unit(s_rele, "s_rele");
    return 60.0 * s_co + 15.0 * s_simi + 15.0 * s_rele + searcher_decay(s_c);
}

std::string_view to_string(JudgeNormalization n) { return n == JudgeNormalization::affine ? "affine" : "tenth"; }

std::optional<JudgeNormalization> parse_judge_normalization(std::string_view s) {
    if (s == "affine") return JudgeNormalization::affine;
    if (s == "tenth") return JudgeNormalization::tenth;
    return std::nullopt;
}

double normalize_judge_score(long long raw, JudgeNormalization n) {
    if (raw < 1 || raw > 10) throw JudgeRangeError(raw);
    return n == JudgeNormalization::affine ? static_cast<double>(raw - 1) / 9.0 : static_cast<double>(raw) / 10.0;
}

JudgeResult correctness_score(const std::string& question, const std::string& gold, const std::string& response,
                              Gateway& judge, const PromptSet& prompts, JudgeNormalization norm,
                              const ChatParams& params) {
    if (is_blank(question) || is_blank(gold) || is_blank(response))
        throw EmptyInputError("correctness_score: question, gold and response must be non-empty");
    std::vector<ChatMessage> messages{
        ChatMessage::system(prompts.judge_system),
        ChatMessage::user(fill_slots(prompts.judge_user, {{"question", question}, {"gold", gold}, {"response", response}}))};
    long long raw = 0;
    try {
        raw = chat_with_format_retry(judge, messages, {}, params, [](const AssistantTurn& turn) -> long long {
            json payload = extract_structured(turn.text.value_or(""), {"score"});
            const json& s = payload["score"];
            if (s.is_number_integer()) return s.get<long long>();
            double v = 0.0;
            if (s.is_number_float()) {
                v = s.get<double>();
            } else if (s.is_string()) {
                std::string text = trim(s.get<std::string>());
                try {
                    std::size_t used = 0;
                    v = std::stod(text, &used);
                    if (used != text.size()) throw std::invalid_argument(text);
                } catch (const std::exception&) {
                    throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"score"});
                }
            } else {
                throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"score"});
            }
            if (v != std::floor(v) || std::abs(v) > 1e9) throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"score"});
            return static_cast<long long>(v);
        });
    } catch (const FormatError& e) {
        throw JudgeFormatError(e.what());
    }
    return JudgeResult{raw, normalize_judge_score(raw, norm)};
}

double clamped_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw DomainError("cosine of vectors with different or zero dimension");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine with a zero vector");
    return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

double semantic_similarity(const std::string& gold, const std::string& response, Embedder& embedder) {
    auto v = embedder.embed({gold, response});
    return clamped_cosine(v[0], v[1]);
}

RelevanceResult relevance_score(const std::string& question, const std::string& response, Gateway& generator,
                                Embedder& embedder, const PromptSet& prompts, std::size_t n_questions,
                                const ChatParams& params) {
    if (is_blank(response)) throw EmptyInputError("relevance_score: empty response");
    if (n_questions == 0) throw DomainError("relevance_score: n_questions must be at least 1");
    std::vector<ChatMessage> messages{
        ChatMessage::system(prompts.question_gen_system),
        ChatMessage::user(fill_slots(prompts.question_gen_user, {{"response", response}, {"n", std::to_string(n_questions)}}))};

    RelevanceResult result;
    try {
        result.candidates = chat_with_format_retry(generator, messages, {}, params, [&](const AssistantTurn& turn) {
            json payload = extract_structured(turn.text.value_or(""), {"questions"});
            std::vector<std::string> out;
            const json& qs = payload["questions"];
            if (qs.is_array()) {
                for (const auto& q : qs) {
                    if (!q.is_string()) continue;
                    std::string s = trim(q.get<std::string>());
                    if (!s.empty() && out.size() < n_questions) out.push_back(std::move(s));
                }
            }
            if (out.empty()) throw StructuredOutputError(StructuredErrorKind::MissingKeys, {"questions"});
            return out;
        });
    } catch (const FormatError&) {
        result.degraded = true;
        return result;
    }

    std::vector<std::string> texts{question};
    texts.insert(texts.end(), result.candidates.begin(), result.candidates.end());
    auto vecs = embedder.embed(texts);
    for (std::size_t i = 1; i < vecs.size(); ++i) {
        double s = clamped_cosine(vecs[0], vecs[i]);
        result.similarities.push_back(s);
        result.score = std::max(result.score, s);
    }
    return result;
}

namespace {

// CJK symbols, fullwidth forms, curly quotes, dashes and ellipsis. They stand
// alone like ideographs, so "3.10%。" still yields the token "3.10%".
bool is_wide_punctuation(char32_t cp) {
    return (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF00 && cp <= 0xFFEF) || (cp >= 0x2010 && cp <= 0x2027);
}

}  // namespace

std::vector<std::string> default_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) out.push_back(std::move(word));
        word.clear();
    };
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t start = pos;
        char32_t cp = next_codepoint(text, pos);
        if (cp < 0x80 ? std::isspace(static_cast<unsigned char>(cp)) != 0 : is_unicode_space(cp)) {
            flush();
        } else if (is_cjk_ideograph(cp) || is_wide_punctuation(cp)) {
            flush();
            out.emplace_back(text.substr(start, pos - start));
        } else {
            word.append(text.substr(start, pos - start));
        }
    }
    flush();
    return out;
}

TokenScores token_scores(const std::vector<std::string>& response, const std::vector<std::string>& gold) {
    if (gold.empty()) throw EmptyGold("token_scores: gold answer has no tokens");
    if (response.empty()) return {};
    std::map<std::string_view, long> counts;
    for (const auto& t : gold) ++counts[t];
    std::size_t overlap = 0;
    for (const auto& t : response) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    TokenScores s;
    s.precision = static_cast<double>(overlap) / static_cast<double>(response.size());
    s.recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
    s.f1 = overlap == 0 ? 0.0 : 2 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

TokenScores token_scores(std::string_view response, std::string_view gold, const Tokenizer& tok) {
    return token_scores(tok(response), tok(gold));
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const std::vector<std::string>& response, const std::vector<std::string>& gold) {
    if (gold.empty()) throw EmptyGold("rouge_l: gold answer has no tokens");
    if (response.empty()) return 0.0;
    std::size_t lcs = lcs_length(response, gold);
    if (lcs == 0) return 0.0;
    double p = static_cast<double>(lcs) / static_cast<double>(response.size());
    double r = static_cast<double>(lcs) / static_cast<double>(gold.size());
    return 2 * p * r / (p + r);
}

double rouge_l(std::string_view response, std::string_view gold, const Tokenizer& tok) {
    return rouge_l(tok(response), tok(gold));
}

double pass_rate(const std::vector<TaskTrace>& traces) {
    if (traces.empty()) throw EmptyInputError("pass_rate: no traces");
    auto done = std::count_if(traces.begin(), traces.end(), [](const TaskTrace& t) { return t.status == TaskStatus::completed; });
    return static_cast<double>(done) / static_cast<double>(traces.size());
}

std::optional<double> overconfidence_ratio(const std::vector<TaskTrace>& traces) {
    if (traces.empty()) throw EmptyInputError("overconfidence_ratio: no traces");
    std::size_t calls = 0, dispatched = 0;
    for (const auto& t : traces) {
        calls += t.function_call_count;
        dispatched += t.searcher_count;
    }
    if (dispatched == 0) return std::nullopt;
    return static_cast<double>(calls) / static_cast<double>(dispatched);
}

bool is_noncompliant(const TaskTrace& t, const std::vector<std::string>& markers) {
    if (t.status == TaskStatus::format_error) return true;
    if (t.status != TaskStatus::completed || !t.final_response) return false;
    return std::any_of(markers.begin(), markers.end(), [&](const std::string& m) {
        return !m.empty() && t.final_response->find(m) != std::string::npos;
    });
}

double noncompliance_rate(const std::vector<TaskTrace>& traces, const std::vector<std::string>& markers) {
    if (traces.empty()) throw EmptyInputError("noncompliance_rate: no traces");
    auto bad = std::count_if(traces.begin(), traces.end(), [&](const TaskTrace& t) { return is_noncompliant(t, markers); });
    return static_cast<double>(bad) / static_cast<double>(traces.size());
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_double(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

}  // namespace

json to_json(const TaskScores& s) {
    json j{{"s_co", opt(s.s_co)}, {"s_simi", opt(s.s_simi)}, {"s_rele", opt(s.s_rele)}};
    j["judge_raw"] = s.judge_raw ? json(*s.judge_raw) : json(nullptr);
    if (s.relevance_degraded) j["relevance_degraded"] = true;
    if (s.tokens)
        j["tokens"] = {{"precision", s.tokens->precision}, {"recall", s.tokens->recall}, {"f1", s.tokens->f1}};
    j["rouge_l"] = opt(s.rouge_l);
    if (!s.errors.empty()) j["errors"] = s.errors;
    return j;
}

TaskScores task_scores_from_json(const json& j) {
    TaskScores s;
    s.s_co = opt_double(j, "s_co");
    s.s_simi = opt_double(j, "s_simi");
    s.s_rele = opt_double(j, "s_rele");
    if (j.contains("judge_raw") && !j["judge_raw"].is_null()) s.judge_raw = j["judge_raw"].get<long long>();
    s.relevance_degraded = j.value("relevance_degraded", false);
    if (j.contains("tokens") && j["tokens"].is_object())
        s.tokens = TokenScores{j["tokens"].at("precision").get<double>(), j["tokens"].at("recall").get<double>(),
                               j["tokens"].at("f1").get<double>()};
    s.rouge_l = opt_double(j, "rouge_l");
    if (j.contains("errors")) s.errors = j["errors"].get<std::vector<std::string>>();
    return s;
}

json to_json(const MetricReport& r) {
    return json{{"s_final", opt(r.s_final)},
                {"s_co", opt(r.s_co)},
                {"s_rele", opt(r.s_rele)},
                {"s_simi", opt(r.s_simi)},
                {"s_c", r.s_c},
                {"pass_rate", r.pass_rate},
                {"f1", opt(r.f1)},
                {"recall", opt(r.recall)},
                {"rouge_l", opt(r.rouge_l)},
                {"overconfidence_ratio", opt(r.overconfidence_ratio)},
                {"noncompliance_rate", r.noncompliance_rate},
                {"n_tasks", r.n_tasks},
                {"n_completed", r.n_completed}};
}

MetricReport metric_report_from_json(const json& j) {
    MetricReport r;
    r.s_final = opt_double(j, "s_final");
    r.s_co = opt_double(j, "s_co");
    r.s_rele = opt_double(j, "s_rele");
    r.s_simi = opt_double(j, "s_simi");
    r.s_c = j.at("s_c").get<double>();
    r.pass_rate = j.at("pass_rate").get<double>();
    r.f1 = opt_double(j, "f1");
    r.recall = opt_double(j, "recall");
    r.rouge_l = opt_double(j, "rouge_l");
    r.overconfidence_ratio = opt_double(j, "overconfidence_ratio");
    r.noncompliance_rate = j.at("noncompliance_rate").get<double>();
    r.n_tasks = j.at("n_tasks").get<std::size_t>();
    r.n_completed = j.at("n_completed").get<std::size_t>();
    return r;
}

MetricReport aggregate_report(const std::vector<TaskTrace>& traces, const std::vector<TaskScores>& scores,
                              const AggregateOptions& opts) {
    if (traces.empty()) throw EmptyInputError("aggregate_report: no traces");
    if (scores.size() != traces.size()) throw DomainError("aggregate_report: traces and scores differ in length");

    MetricReport r;
    r.n_tasks = traces.size();
    double calls = 0;
    for (const auto& t : traces) calls += static_cast<double>(t.searcher_count);
    r.s_c = calls / static_cast<double>(traces.size());
    r.pass_rate = pass_rate(traces);
    r.n_completed = static_cast<std::size_t>(
        std::count_if(traces.begin(), traces.end(), [](const TaskTrace& t) { return t.status == TaskStatus::completed; }));
    r.overconfidence_ratio = overconfidence_ratio(traces);
    r.noncompliance_rate = noncompliance_rate(traces, opts.sentinel_markers);

    struct Mean {
        double sum = 0;
        std::size_t n = 0;
        void add(double v) { sum += v, ++n; }
        std::optional<double> get() const { return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt; }
    };
    Mean co, simi, rele, f1, recall, rl;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const TaskScores& s = scores[i];
        bool completed = traces[i].status == TaskStatus::completed;
        if (!completed && !opts.zero_fill) continue;
        auto take = [&](Mean& m, const std::optional<double>& v) {
            if (v)
                m.add(*v);
            else if (opts.zero_fill && !completed)
                m.add(0.0);
        };
        take(co, s.s_co);
        take(simi, s.s_simi);
        take(rele, s.s_rele);
        take(f1, s.tokens ? std::optional<double>(s.tokens->f1) : std::nullopt);
        take(recall, s.tokens ? std::optional<double>(s.tokens->recall) : std::nullopt);
        take(rl, s.rouge_l);
    }
    r.s_co = co.get();
    r.s_simi = simi.get();
    r.s_rele = rele.get();
    r.f1 = f1.get();
    r.recall = recall.get();
    r.rouge_l = rl.get();
    if (r.s_co && r.s_simi && r.s_rele) r.s_final = final_score(*r.s_co, *r.s_simi, *r.s_rele, r.s_c);
    return r;
}

}  // namespace levelnavi
