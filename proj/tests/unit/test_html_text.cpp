#include <doctest.h>

#include <iconv.h>

#include <stdexcept>

#include "levelnavi/html_text.hpp"
#include "levelnavi/text_util.hpp"

using namespace levelnavi;

namespace {

// Test-side encoder, so the decode path is checked against an independent
// conversion rather than itself.
std::string encode_from_utf8(const std::string& utf8, const char* charset) {
    iconv_t cd = iconv_open(charset, "UTF-8");
    if (cd == reinterpret_cast<iconv_t>(-1)) throw std::runtime_error("iconv_open");
    std::string out(utf8.size() * 4 + 16, '\0');
    char* in = const_cast<char*>(utf8.data());
    std::size_t in_left = utf8.size();
    char* dst = out.data();
    std::size_t out_left = out.size();
    std::size_t rc = iconv(cd, &in, &in_left, &dst, &out_left);
    iconv_close(cd);
    if (rc == static_cast<std::size_t>(-1)) throw std::runtime_error("iconv");
    out.resize(out.size() - out_left);
    return out;
}

}  // namespace

TEST_SUITE("html_text") {

TEST_CASE("scripts and styles are dropped") {
    CHECK(extract_text("<p>你好</p><script>x()</script>") == "你好");
    CHECK(extract_text("<html><head><style>p{color:red}</style></head><body><p>a</p></body></html>") == "a");
    CHECK(extract_text("<html></html>") == "");
}

TEST_CASE("entities and whitespace") {
    CHECK(extract_text("<p>A&amp;B&nbsp;&lt;c&gt; &#20320;&#x597D;</p>") == "A&B <c> 你好");
    CHECK(extract_text("<p>a\n   b</p><p>c</p>") == "a b\nc");
}

TEST_CASE("GB18030 page round-trips") {
    const std::string known = "《生化危机4 重制版》于2023年3月24日发售。";
    std::string body = "<html><head><meta charset=\"gb18030\"></head><body><p>" +
                       encode_from_utf8(known, "GB18030") + "</p></body></html>";
    REQUIRE_FALSE(is_valid_utf8(body));
    CHECK(extract_text(body) == known);
    CHECK(extract_text(body, std::string("GB18030")) == known);

    std::string gbk = "<p>" + encode_from_utf8("中文网页", "GBK") + "</p>";
    CHECK(extract_text(gbk, charset_from_content_type("text/html; charset=GBK")) == "中文网页");
}

TEST_CASE("charset helpers") {
    CHECK(charset_from_content_type("text/html; charset=\"UTF-8\"") == "UTF-8");
    CHECK_FALSE(charset_from_content_type("text/html").has_value());
    CHECK(sniff_meta_charset("<meta http-equiv=\"Content-Type\" content=\"text/html; charset=gbk\">") == "gbk");
    CHECK_FALSE(convert_to_utf8("abc", "no-such-charset").has_value());
}

TEST_CASE("extraction is idempotent on its own output") {
    const char* docs[] = {
        "<div><h1>标题</h1><p>第一段 text</p><ul><li>一</li><li>二</li></ul></div>",
        "<p>a &amp; b</p><script>var x = '<p>no</p>';</script><p>c</p>",
        "<body>plain   words\tand\nlines</body>",
    };
    for (const char* d : docs) {
        std::string once = extract_text(d);
        // "&" would be read back as an entity start; escape before re-wrapping
        std::string wrapped = "<p>" + replace_all(replace_all(once, "&", "&amp;"), "<", "&lt;") + "</p>";
        std::string twice = extract_text(wrapped);
        CHECK(replace_all(twice, "\n", " ") == replace_all(once, "\n", " "));
    }
}

TEST_CASE("budget truncation") {
    std::string text;
    for (int i = 0; i < 2000; ++i) text += "字词 ";
    Truncated t = truncate_to_budget(text, 1000);
    CHECK(t.truncated);
    CHECK(utf8_length(t.text) <= 1000);
    CHECK(utf8_length(t.text) >= 500);
    CHECK(is_valid_utf8(t.text));

    Truncated whole = truncate_to_budget("短文本", 1000);
    CHECK_FALSE(whole.truncated);
    CHECK(whole.text == "短文本");
}

}
