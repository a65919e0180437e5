#include "levelnavi/domain.hpp"

#include <fmt/format.h>

#include <fstream>
#include <set>
#include <sstream>

#include "levelnavi/text_util.hpp"

namespace levelnavi {

std::string_view to_string(Source s) {
    switch (s) {
        case Source::news: return "news";
        case Source::knowledge: return "knowledge";
    }
    return "?";
}

std::string_view to_string(Domain d) {
    switch (d) {
        case Domain::finance: return "finance";
        case Domain::gaming: return "gaming";
        case Domain::sports: return "sports";
        case Domain::movie: return "movie";
        case Domain::event: return "event";
    }
    return "?";
}

std::string_view to_string(QuestionType t) {
    switch (t) {
        case QuestionType::simple: return "simple";
        case QuestionType::condition: return "condition";
        case QuestionType::comparison: return "comparison";
        case QuestionType::multi_hop: return "multi_hop";
    }
    return "?";
}

std::string_view to_string(ValidationErrorKind k) {
    switch (k) {
        case ValidationErrorKind::MissingField: return "MissingField";
        case ValidationErrorKind::BadEnumValue: return "BadEnumValue";
        case ValidationErrorKind::NewsWithoutUrl: return "NewsWithoutUrl";
        case ValidationErrorKind::BadValue: return "BadValue";
        case ValidationErrorKind::ParseError: return "ParseError";
    }
    return "?";
}

std::optional<Source> parse_source(std::string_view s) {
    for (Source v : kAllSources)
        if (to_string(v) == s) return v;
    return std::nullopt;
}

std::optional<Domain> parse_domain(std::string_view s) {
    for (Domain v : kAllDomains)
        if (to_string(v) == s) return v;
    return std::nullopt;
}

std::optional<QuestionType> parse_question_type(std::string_view s) {
    std::string canonical = replace_all(std::string(s), "-", "_");
    for (QuestionType v : kAllQuestionTypes)
        if (to_string(v) == canonical) return v;
    return std::nullopt;
}

namespace {

std::string describe(std::string_view record_id, std::size_t line) {
    std::string where = line > 0 ? fmt::format("line {}", line) : std::string("record");
    if (!record_id.empty()) where += fmt::format(" (id {})", record_id);
    return where;
}

bool is_iso_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (s[i] < '0' || s[i] > '9') return false;
    int y = std::stoi(std::string(s.substr(0, 4)));
    int m = std::stoi(std::string(s.substr(5, 2)));
    int d = std::stoi(std::string(s.substr(8, 2)));
    if (m < 1 || m > 12 || d < 1) return false;
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    int limit = kDays[m - 1] + (m == 2 && leap ? 1 : 0);
    return d <= limit;
}

const std::set<std::string, std::less<>> kKnownKeys{"id",     "question", "answer", "source",
                                                     "domain", "qtype",    "urls",   "date"};

}  // namespace

ValidationError::ValidationError(ValidationErrorKind kind, std::string field, std::string record_id,
                                 std::size_t line, const std::string& detail)
    : Error(fmt::format("{}: {} on field '{}': {}", describe(record_id, line), to_string(kind),
                        field, detail)),
      kind_(kind),
      field_(std::move(field)),
      record_id_(std::move(record_id)),
      line_(line) {}

AggregateValidationError::AggregateValidationError(std::vector<ValidationError> errors)
    : Error([&] {
          std::string msg = fmt::format("{} invalid record(s)", errors.size());
          for (const auto& e : errors) msg += fmt::format("\n  {}", e.what());
          return msg;
      }()),
      errors_(std::move(errors)) {}

QAPair validate_record(const json& raw, std::size_t line) {
    if (!raw.is_object())
        throw ValidationError(ValidationErrorKind::ParseError, "<record>", "", line,
                              "expected a JSON object");

    std::string id;
    if (auto it = raw.find("id"); it != raw.end() && it->is_string()) id = it->get<std::string>();

    const auto fail = [&](ValidationErrorKind kind, const std::string& field,
                          const std::string& detail) -> ValidationError {
        return ValidationError(kind, field, id, line, detail);
    };

    const auto required_text = [&](const char* field) {
        auto it = raw.find(field);
        if (it == raw.end() || it->is_null())
            throw fail(ValidationErrorKind::MissingField, field, "required");
        if (!it->is_string()) throw fail(ValidationErrorKind::BadValue, field, "must be a string");
        std::string value = it->get<std::string>();
        if (is_blank(value)) throw fail(ValidationErrorKind::MissingField, field, "blank");
        return value;
    };

    QAPair rec;
    rec.id = required_text("id");
    rec.question = required_text("question");
    rec.answer = required_text("answer");

    std::string source = required_text("source");
    std::string domain = required_text("domain");
    std::string qtype = required_text("qtype");
    auto src = parse_source(source);
    if (!src) throw fail(ValidationErrorKind::BadEnumValue, "source", fmt::format("'{}'", source));
    auto dom = parse_domain(domain);
    if (!dom) throw fail(ValidationErrorKind::BadEnumValue, "domain", fmt::format("'{}'", domain));
    auto qt = parse_question_type(qtype);
    if (!qt) throw fail(ValidationErrorKind::BadEnumValue, "qtype", fmt::format("'{}'", qtype));
    rec.source = *src;
    rec.domain = *dom;
    rec.qtype = *qt;

    if (auto it = raw.find("urls"); it != raw.end() && !it->is_null()) {
        if (!it->is_array()) throw fail(ValidationErrorKind::BadValue, "urls", "must be a list");
        for (const auto& u : *it) {
            if (!u.is_string() || !is_http_url(u.get<std::string>()))
                throw fail(ValidationErrorKind::BadValue, "urls",
                           fmt::format("not an absolute http(s) URL: {}", u.dump()));
            rec.urls.push_back(u.get<std::string>());
        }
    }
    if (rec.source == Source::news && rec.urls.empty())
        throw fail(ValidationErrorKind::NewsWithoutUrl, "urls",
                   "news records must list at least one source URL");

    if (auto it = raw.find("date"); it != raw.end() && !it->is_null()) {
        if (!it->is_string() || !is_iso_date(it->get<std::string>()))
            throw fail(ValidationErrorKind::BadValue, "date", "expected YYYY-MM-DD");
        rec.date = it->get<std::string>();
    }

    for (auto it = raw.begin(); it != raw.end(); ++it) {
        if (!kKnownKeys.contains(it.key())) rec.extras[it.key()] = it.value();
    }
    return rec;
}

json to_json(const QAPair& r) {
    json j = json::object();
    j["id"] = r.id;
    j["question"] = r.question;
    j["answer"] = r.answer;
    j["source"] = to_string(r.source);
    j["domain"] = to_string(r.domain);
    j["qtype"] = to_string(r.qtype);
    j["urls"] = r.urls;
    if (r.date) j["date"] = *r.date;
    for (auto it = r.extras.begin(); it != r.extras.end(); ++it) j[it.key()] = it.value();
    return j;
}

std::vector<QAPair> parse_dataset(std::string_view jsonl) {
    std::vector<QAPair> out;
    std::vector<ValidationError> errors;
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < jsonl.size()) {
        std::size_t end = jsonl.find('\n', start);
        if (end == std::string_view::npos) end = jsonl.size();
        std::string_view line = jsonl.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (is_blank(line)) continue;
        try {
            json raw = json::parse(line);
            QAPair rec = validate_record(raw, line_no);
            if (!seen.insert(rec.id).second)
                throw ValidationError(ValidationErrorKind::BadValue, "id", rec.id, line_no,
                                      "duplicate id");
            out.push_back(std::move(rec));
        } catch (const json::parse_error& e) {
            errors.emplace_back(ValidationErrorKind::ParseError, "<line>", "", line_no, e.what());
        } catch (const ValidationError& e) {
            errors.push_back(e);
        }
    }
    if (!errors.empty()) throw AggregateValidationError(std::move(errors));
    return out;
}

std::vector<QAPair> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open dataset {}", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError(fmt::format("read failed for {}", path.string()));
    return parse_dataset(buf.str());
}

std::string serialize_dataset(const std::vector<QAPair>& records) {
    std::string out;
    for (const auto& r : records) {
        out += to_json(r).dump();
        out += '\n';
    }
    return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<QAPair>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write dataset {}", path.string()));
    out << serialize_dataset(records);
    if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

std::size_t DatasetStats::cell(Domain d, QuestionType t) const {
    auto it = by_cell.find({d, t});
    return it == by_cell.end() ? 0 : it->second;
}

DatasetStats dataset_stats(const std::vector<QAPair>& records) {
    DatasetStats s;
    for (Domain d : kAllDomains) s.by_domain[d] = 0;
    for (QuestionType t : kAllQuestionTypes) s.by_qtype[t] = 0;
    for (Source src : kAllSources) s.by_source[src] = 0;
    for (Domain d : kAllDomains)
        for (QuestionType t : kAllQuestionTypes) s.by_cell[{d, t}] = 0;
    for (const auto& r : records) {
        ++s.total;
        ++s.by_domain[r.domain];
        ++s.by_qtype[r.qtype];
        ++s.by_cell[{r.domain, r.qtype}];
        ++s.by_source[r.source];
    }
    return s;
}

std::string render_stats_matrix(const DatasetStats& s) {
    std::string out = fmt::format("{:<10}", "Domain");
    for (QuestionType t : kAllQuestionTypes) out += fmt::format(" {:>10}", to_string(t));
    out += fmt::format(" | {:>5}\n", "All");
    for (Domain d : kAllDomains) {
        out += fmt::format("{:<10}", to_string(d));
        for (QuestionType t : kAllQuestionTypes) out += fmt::format(" {:>10}", s.cell(d, t));
        out += fmt::format(" | {:>5}\n", s.by_domain.at(d));
    }
    out += fmt::format("{:<10}", "All");
    for (QuestionType t : kAllQuestionTypes) out += fmt::format(" {:>10}", s.by_qtype.at(t));
    out += fmt::format(" | {:>5}\n", s.total);
    out += fmt::format("sources: news {}, knowledge {}\n", s.by_source.at(Source::news),
                       s.by_source.at(Source::knowledge));
    return out;
}

}  // namespace levelnavi
