#pragma once

// Benchmark records: the QA pair schema, JSONL loading/writing and the
// domain x type distribution used to describe a dataset.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "levelnavi/error.hpp"

namespace levelnavi {

using json = nlohmann::ordered_json;

enum class Source { news, knowledge };
enum class Domain { finance, gaming, sports, movie, event };
enum class QuestionType { simple, condition, comparison, multi_hop };

inline constexpr std::array<Source, 2> kAllSources{Source::news, Source::knowledge};
inline constexpr std::array<Domain, 5> kAllDomains{Domain::finance, Domain::gaming, Domain::sports,
                                                   Domain::movie, Domain::event};
inline constexpr std::array<QuestionType, 4> kAllQuestionTypes{
    QuestionType::simple, QuestionType::condition, QuestionType::comparison, QuestionType::multi_hop};

std::string_view to_string(Source s);
std::string_view to_string(Domain d);
std::string_view to_string(QuestionType t);

std::optional<Source> parse_source(std::string_view s);
std::optional<Domain> parse_domain(std::string_view s);
// Accepts "multi-hop" as well as the canonical "multi_hop".
std::optional<QuestionType> parse_question_type(std::string_view s);

struct QAPair {
    std::string id;
    std::string question;
    std::string answer;
    Source source = Source::news;
    Domain domain = Domain::event;
    QuestionType qtype = QuestionType::simple;
    std::vector<std::string> urls;
    std::optional<std::string> date;  // YYYY-MM-DD
    json extras = json::object();     // unknown keys, preserved verbatim

    bool operator==(const QAPair&) const = default;
};

enum class ValidationErrorKind { MissingField, BadEnumValue, NewsWithoutUrl, BadValue, ParseError };

std::string_view to_string(ValidationErrorKind k);

class ValidationError : public Error {
public:
    ValidationError(ValidationErrorKind kind, std::string field, std::string record_id,
                    std::size_t line, const std::string& detail);

    ValidationErrorKind kind() const noexcept { return kind_; }
    const std::string& field() const noexcept { return field_; }
    const std::string& record_id() const noexcept { return record_id_; }
    std::size_t line() const noexcept { return line_; }

private:
    ValidationErrorKind kind_;
    std::string field_;
    std::string record_id_;
    std::size_t line_;
};

class AggregateValidationError : public Error {
public:
    explicit AggregateValidationError(std::vector<ValidationError> errors);
    const std::vector<ValidationError>& errors() const noexcept { return errors_; }

private:
    std::vector<ValidationError> errors_;
};

// `line` is 1-based and only used for error messages (0 = unknown).
QAPair validate_record(const json& raw, std::size_t line = 0);

json to_json(const QAPair& record);

std::vector<QAPair> parse_dataset(std::string_view jsonl);
std::vector<QAPair> load_dataset(const std::filesystem::path& path);
std::string serialize_dataset(const std::vector<QAPair>& records);
void write_dataset(const std::filesystem::path& path, const std::vector<QAPair>& records);

struct DatasetStats {
    std::size_t total = 0;
    std::map<Domain, std::size_t> by_domain;
    std::map<QuestionType, std::size_t> by_qtype;
    std::map<std::pair<Domain, QuestionType>, std::size_t> by_cell;
    std::map<Source, std::size_t> by_source;

    std::size_t cell(Domain d, QuestionType t) const;
    bool operator==(const DatasetStats&) const = default;
};

DatasetStats dataset_stats(const std::vector<QAPair>& records);

// Domain x type matrix with row/column sums.
std::string render_stats_matrix(const DatasetStats& stats);

}  // namespace levelnavi
