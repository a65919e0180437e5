#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace levelnavi {

std::string trim(std::string_view s);
bool is_blank(std::string_view s);

// Decodes one UTF-8 codepoint at `pos`; invalid bytes decode as U+FFFD and
// advance by one byte.
char32_t next_codepoint(std::string_view s, std::size_t& pos);
void append_utf8(std::string& out, char32_t cp);
bool is_valid_utf8(std::string_view s);
std::size_t utf8_length(std::string_view s);
std::vector<char32_t> to_codepoints(std::string_view s);

bool is_cjk_ideograph(char32_t cp);
bool is_unicode_space(char32_t cp);

// Absolute http(s) URL with a non-empty host.
bool is_http_url(std::string_view url);
std::optional<std::string> url_host(std::string_view url);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

// Substitutes {name} slots; unknown slots are left as-is.
std::string fill_slots(std::string_view tmpl,
                       const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace levelnavi
