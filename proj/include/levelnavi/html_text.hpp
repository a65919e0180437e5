#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace levelnavi {

// Converts `bytes` in `charset` to UTF-8. Returns nullopt when the charset is
// unknown or the input is not valid in it.
std::optional<std::string> convert_to_utf8(std::string_view bytes, std::string_view charset);

// "text/html; charset=GBK" -> "GBK"
std::optional<std::string> charset_from_content_type(std::string_view content_type);

// <meta charset> / http-equiv sniffing over the document head.
std::optional<std::string> sniff_meta_charset(std::string_view html);

// Decoding order: declared charset, meta/heuristic detection, lossy UTF-8.
std::string decode_html_bytes(std::string_view bytes, const std::optional<std::string>& declared_charset);

// Visible text of an HTML document: script/style/nav-like boilerplate
// removed, entities decoded, whitespace collapsed, one paragraph per line.
std::string extract_text(std::string_view html, const std::optional<std::string>& declared_charset = std::nullopt);

struct Truncated {
    std::string text;
    bool truncated = false;
};

// Cuts `text` to at most `budget` codepoints, preferring the last whitespace
// in the second half of the window.
Truncated truncate_to_budget(std::string_view text, std::size_t budget);

}  // namespace levelnavi
