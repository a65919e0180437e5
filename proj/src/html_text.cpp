#include "levelnavi/html_text.hpp"

#include <iconv.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <map>
#include <vector>

#include "levelnavi/text_util.hpp"

namespace levelnavi {

namespace {

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool iequals_at(std::string_view hay, std::size_t pos, std::string_view needle) {
    if (pos + needle.size() > hay.size()) return false;
    for (std::size_t i = 0; i < needle.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(hay[pos + i])) !=
            std::tolower(static_cast<unsigned char>(needle[i])))
            return false;
    }
    return true;
}

std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t from) {
    for (std::size_t i = from; i + needle.size() <= hay.size(); ++i)
        if (iequals_at(hay, i, needle)) return i;
    return std::string_view::npos;
}

std::string canonical_charset(std::string_view name) {
    std::string c = lower_ascii(trim(name));
    if (c.size() >= 2 && (c.front() == '"' || c.front() == '\'')) c = c.substr(1, c.size() - 2);
    if (c == "gbk" || c == "gb2312" || c == "gb_2312-80" || c == "x-gbk" || c == "cp936") return "GB18030";
    if (c == "utf8") return "utf-8";
    return c;
}

class Iconv {
public:
    Iconv(const char* to, const char* from) : cd_(iconv_open(to, from)) {}
    ~Iconv() {
        if (ok()) iconv_close(cd_);
    }
    Iconv(const Iconv&) = delete;
    Iconv& operator=(const Iconv&) = delete;
    bool ok() const { return cd_ != reinterpret_cast<iconv_t>(-1); }
    iconv_t get() const { return cd_; }

private:
    iconv_t cd_;
};

const std::map<std::string, char32_t, std::less<>>& named_entities() {
    static const std::map<std::string, char32_t, std::less<>> table{
        {"amp", '&'},      {"lt", '<'},       {"gt", '>'},       {"quot", '"'},     {"apos", '\''},
        {"nbsp", 0xA0},    {"copy", 0xA9},    {"reg", 0xAE},     {"yen", 0xA5},     {"middot", 0xB7},
        {"times", 0xD7},   {"ndash", 0x2013}, {"mdash", 0x2014}, {"lsquo", 0x2018}, {"rsquo", 0x2019},
        {"ldquo", 0x201C}, {"rdquo", 0x201D}, {"hellip", 0x2026}, {"bull", 0x2022}, {"deg", 0xB0},
        {"ensp", 0x2002},  {"emsp", 0x2003},  {"thinsp", 0x2009}, {"laquo", 0xAB},  {"raquo", 0xBB},
    };
    return table;
}

// Decodes the entity starting at text[pos] == '&'. On success appends it and
// returns the index after ';'.
std::optional<std::size_t> decode_entity(std::string_view text, std::size_t pos, std::string& out) {
    std::size_t semi = text.find(';', pos + 1);
    if (semi == std::string_view::npos || semi - pos > 12) return std::nullopt;
    std::string_view body = text.substr(pos + 1, semi - pos - 1);
    if (body.empty()) return std::nullopt;
    if (body[0] == '#') {
        std::string digits(body.substr(1));
        int base = 10;
        if (!digits.empty() && (digits[0] == 'x' || digits[0] == 'X')) {
            base = 16;
            digits.erase(0, 1);
        }
        if (digits.empty()) return std::nullopt;
        for (char c : digits)
            if (!(base == 16 ? std::isxdigit(static_cast<unsigned char>(c)) : std::isdigit(static_cast<unsigned char>(c))))
                return std::nullopt;
        unsigned long cp = std::strtoul(digits.c_str(), nullptr, base);
        if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
        append_utf8(out, static_cast<char32_t>(cp));
        return semi + 1;
    }
    auto it = named_entities().find(body);
    if (it == named_entities().end()) return std::nullopt;
    append_utf8(out, it->second);
    return semi + 1;
}

constexpr std::array<std::string_view, 10> kSkippedElements{
    "script", "style", "noscript", "template", "svg", "nav", "footer", "aside", "iframe", "select"};

constexpr std::array<std::string_view, 29> kBlockElements{
    "p",      "div",  "br",         "li",  "ul", "ol",  "h1",      "h2",      "h3",   "h4",
    "h5",     "h6",   "tr",         "table", "section", "article", "header", "main", "blockquote",
    "pre",    "hr",   "dd",         "dt",  "dl", "title", "figcaption", "address", "body", "form"};

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view name) {
    return std::find(set.begin(), set.end(), name) != set.end();
}

// Index one past the '>' closing the tag that starts at `pos`, honoring quotes.
std::size_t tag_end(std::string_view html, std::size_t pos) {
    char quote = 0;
    for (std::size_t i = pos; i < html.size(); ++i) {
        char c = html[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '>') {
            return i + 1;
        }
    }
    return html.size();
}

// After an opening <name ...> of a skipped element, the index past its
// matching close tag (nested same-name elements counted).
std::size_t skip_element(std::string_view html, std::size_t pos, std::string_view name) {
    int depth = 1;
    std::string open = "<" + std::string(name);
    std::string close = "</" + std::string(name);
    while (pos < html.size()) {
        std::size_t next_close = ifind(html, close, pos);
        if (next_close == std::string_view::npos) return html.size();
        // script/style contents are raw text; only other containers nest.
        if (name != "script" && name != "style") {
            std::size_t next_open = ifind(html, open, pos);
            if (next_open != std::string_view::npos && next_open < next_close) {
                std::size_t after = next_open + open.size();
                if (after < html.size() && !std::isalnum(static_cast<unsigned char>(html[after]))) ++depth;
                pos = tag_end(html, after);
                continue;
            }
        }
        std::size_t end = tag_end(html, next_close + close.size());
        if (--depth == 0) return end;
        pos = end;
    }
    return html.size();
}

std::string collapse_lines(std::string_view raw) {
    std::string out;
    std::string line;
    bool pending_space = false;
    const auto flush_line = [&] {
        if (!line.empty()) {
            if (!out.empty()) out.push_back('\n');
            out += line;
        }
        line.clear();
        pending_space = false;
    };
    std::size_t pos = 0;
    while (pos < raw.size()) {
        char32_t cp = next_codepoint(raw, pos);
        if (cp == '\n') {
            flush_line();
        } else if (is_unicode_space(cp)) {
            pending_space = !line.empty();
        } else {
            if (pending_space) line.push_back(' ');
            pending_space = false;
            append_utf8(line, cp);
        }
    }
    flush_line();
    return out;
}

}  // namespace

std::optional<std::string> convert_to_utf8(std::string_view bytes, std::string_view charset) {
    std::string cs = canonical_charset(charset);
    if (cs == "utf-8") {
        if (!is_valid_utf8(bytes)) return std::nullopt;
        return std::string(bytes);
    }
    Iconv cd("UTF-8", cs.c_str());
    if (!cd.ok()) return std::nullopt;
    std::string out;
    std::vector<char> buf(4096);
    char* in_ptr = const_cast<char*>(bytes.data());
    std::size_t in_left = bytes.size();
    while (in_left > 0) {
        char* out_ptr = buf.data();
        std::size_t out_left = buf.size();
        std::size_t rc = iconv(cd.get(), &in_ptr, &in_left, &out_ptr, &out_left);
        out.append(buf.data(), buf.size() - out_left);
        if (rc == static_cast<std::size_t>(-1)) {
            if (errno == E2BIG) continue;
            return std::nullopt;
        }
    }
    return out;
}

std::optional<std::string> charset_from_content_type(std::string_view content_type) {
    std::string lower = lower_ascii(content_type);
    std::size_t pos = lower.find("charset=");
    if (pos == std::string::npos) return std::nullopt;
    std::string_view rest = std::string_view(content_type).substr(pos + 8);
    std::size_t end = rest.find_first_of(";, ");
    std::string value = trim(rest.substr(0, end));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'')) value = value.substr(1, value.size() - 2);
    if (value.empty()) return std::nullopt;
    return value;
}

std::optional<std::string> sniff_meta_charset(std::string_view html) {
    std::string_view head = html.substr(0, std::min<std::size_t>(html.size(), 4096));
    for (std::size_t pos = ifind(head, "<meta", 0); pos != std::string_view::npos;
         pos = ifind(head, "<meta", pos + 5)) {
        std::size_t end = tag_end(head, pos);
        std::string tag = lower_ascii(head.substr(pos, end - pos));
        std::size_t cs = tag.find("charset=");
        if (cs == std::string::npos) continue;
        std::size_t start = cs + 8;
        while (start < tag.size() && (tag[start] == '"' || tag[start] == '\'' || tag[start] == ' ')) ++start;
        std::size_t stop = tag.find_first_of("\"'; />", start);
        std::string value = tag.substr(start, stop == std::string::npos ? std::string::npos : stop - start);
        if (!value.empty()) return value;
    }
    return std::nullopt;
}

std::string decode_html_bytes(std::string_view bytes, const std::optional<std::string>& declared_charset) {
    if (declared_charset) {
        if (auto s = convert_to_utf8(bytes, *declared_charset)) return *s;
    }
    if (auto meta = sniff_meta_charset(bytes)) {
        if (auto s = convert_to_utf8(bytes, *meta)) return *s;
    }
    if (is_valid_utf8(bytes)) return std::string(bytes);
    if (auto s = convert_to_utf8(bytes, "GB18030")) return *s;
    std::string lossy;
    std::size_t pos = 0;
    while (pos < bytes.size()) append_utf8(lossy, next_codepoint(bytes, pos));
    return lossy;
}

std::string extract_text(std::string_view raw_html, const std::optional<std::string>& declared_charset) {
    const std::string decoded = decode_html_bytes(raw_html, declared_charset);
    std::string_view html = decoded;
    std::string raw;
    raw.reserve(html.size());
    std::size_t i = 0;
    while (i < html.size()) {
        char c = html[i];
        if (c == '<') {
            if (html.compare(i, 4, "<!--") == 0) {
                std::size_t end = html.find("-->", i + 4);
                i = end == std::string_view::npos ? html.size() : end + 3;
                continue;
            }
            char n = i + 1 < html.size() ? html[i + 1] : '\0';
            if (n == '!' || n == '?') {
                i = tag_end(html, i + 1);
                continue;
            }
            bool closing = n == '/';
            std::size_t name_start = i + (closing ? 2 : 1);
            if (name_start < html.size() && std::isalpha(static_cast<unsigned char>(html[name_start]))) {
                std::size_t name_end = name_start;
                while (name_end < html.size() &&
                       (std::isalnum(static_cast<unsigned char>(html[name_end])) || html[name_end] == '-'))
                    ++name_end;
                std::string name = lower_ascii(html.substr(name_start, name_end - name_start));
                std::size_t after = tag_end(html, name_end);
                bool self_closing = after >= 2 && html[after - 2] == '/';
                if (!closing && !self_closing && contains(kSkippedElements, name)) {
                    i = skip_element(html, after, name);
                    raw.push_back('\n');
                    continue;
                }
                if (contains(kBlockElements, name)) {
                    raw.push_back('\n');
                } else if (name == "td" || name == "th") {
                    raw.push_back(' ');
                }
                i = after;
                continue;
            }
            raw.push_back(c);
            ++i;
            continue;
        }
        if (c == '&') {
            if (auto next = decode_entity(html, i, raw)) {
                i = *next;
                continue;
            }
        }
        // line breaks in the source are ordinary whitespace; block tags make lines
        raw.push_back(c == '\n' || c == '\r' || c == '\t' ? ' ' : c);
        ++i;
    }
    return collapse_lines(raw);
}

Truncated truncate_to_budget(std::string_view text, std::size_t budget) {
    std::vector<std::size_t> offsets;  // byte offset of each codepoint
    std::size_t pos = 0;
    while (pos < text.size() && offsets.size() <= budget) {
        offsets.push_back(pos);
        next_codepoint(text, pos);
    }
    if (offsets.size() <= budget) return {std::string(text), false};
    // offsets[budget] is the first codepoint past the window.
    std::size_t cut = offsets[budget];
    std::size_t probe = cut;
    bool next_is_space = false;
    {
        std::size_t p = offsets[budget];
        next_is_space = is_unicode_space(next_codepoint(text, p));
    }
    if (!next_is_space) {
        for (std::size_t k = budget; k > budget / 2; --k) {
            std::size_t p = offsets[k - 1];
            if (is_unicode_space(next_codepoint(text, p))) {
                probe = offsets[k - 1];
                break;
            }
        }
        cut = probe;
    }
    return {trim(text.substr(0, cut)), true};
}

}  // namespace levelnavi
