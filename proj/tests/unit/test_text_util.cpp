#include <doctest.h>

#include "levelnavi/text_util.hpp"

using namespace levelnavi;

TEST_SUITE("text_util") {

TEST_CASE("trim and blank") {
    CHECK(trim("  a b \n") == "a b");
    CHECK(trim("\xE3\x80\x80你好\xE3\x80\x80") == "你好");  // ideographic spaces
    CHECK(is_blank(" \t\n"));
    CHECK(is_blank(""));
    CHECK_FALSE(is_blank(" x "));
}

TEST_CASE("utf8 decoding") {
    CHECK(utf8_length("你好a") == 3);
    CHECK(is_valid_utf8("你好"));
    CHECK_FALSE(is_valid_utf8("\xff\xfe"));
    auto cps = to_codepoints("a你");
    REQUIRE(cps.size() == 2);
    CHECK(cps[1] == U'你');

    std::string s;
    append_utf8(s, U'😀');
    append_utf8(s, U'é');
    CHECK(to_codepoints(s) == std::vector<char32_t>{U'😀', U'é'});

    std::size_t pos = 0;
    CHECK(next_codepoint("\xff", pos) == 0xFFFD);
    CHECK(pos == 1);
}

TEST_CASE("character classes") {
    CHECK(is_cjk_ideograph(U'中'));
    CHECK_FALSE(is_cjk_ideograph(U'a'));
    CHECK_FALSE(is_cjk_ideograph(U'。'));
    CHECK(is_unicode_space(U'　'));
}

TEST_CASE("urls") {
    CHECK(is_http_url("https://example.com/a?b=1"));
    CHECK_FALSE(is_http_url("ftp://example.com"));
    CHECK_FALSE(is_http_url("https://"));
    CHECK(url_host("https://News.Example.com:8080/x") == "news.example.com");
    CHECK_FALSE(url_host("not a url").has_value());
}

TEST_CASE("slot filling") {
    CHECK(fill_slots("{a}+{b}={c}", {{"a", "1"}, {"b", "2"}}) == "1+2={c}");
    // substituted values are not re-expanded
    CHECK(fill_slots("{a}", {{"a", "{b}"}, {"b", "x"}}) == "{b}");
    CHECK(replace_all("aaa", "a", "bb") == "bbbbbb");
}

}
