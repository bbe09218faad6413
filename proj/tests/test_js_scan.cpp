#include <gtest/gtest.h>

#include "json.hpp"
#include "pixelarch/js_scan.hpp"

namespace js = pixelarch::js;

TEST(JsScan, ExtractArgumentsSplitsTopLevelCommas) {
  std::string_view text = R"(f("a,b", {x: [1, 2]}, g(3, 4)) rest)";
  auto args = js::extract_arguments(text, 1);
  ASSERT_TRUE(args);
  ASSERT_EQ(args->args.size(), 3u);
  EXPECT_EQ(args->args[0], R"("a,b")");
  EXPECT_EQ(args->args[1], "{x: [1, 2]}");
  EXPECT_EQ(args->args[2], "g(3, 4)");
  EXPECT_EQ(text.substr(args->end), " rest");
}

TEST(JsScan, ExtractArgumentsIgnoresBracketsInStringsCommentsAndRegex) {
  std::string_view text = R"js((")", /* ) */ '(', /\)"/g, `${"}"}`))js";
  auto args = js::extract_arguments(text, 0);
  ASSERT_TRUE(args);
  EXPECT_EQ(args->args.size(), 4u);
  EXPECT_EQ(args->end, text.size());
}

TEST(JsScan, ExtractArgumentsRejectsUnbalanced) {
  EXPECT_FALSE(js::extract_arguments("(a, [b)", 0));
  EXPECT_FALSE(js::extract_arguments("(a, b", 0));
}

TEST(JsScan, DivisionIsNotARegex) {
  // `a / b / c` must not be treated as a regex that swallows the ')'.
  auto args = js::extract_arguments("(a / b / c, d)", 0);
  ASSERT_TRUE(args);
  EXPECT_EQ(args->args.size(), 2u);
}

TEST(JsScan, DecodesEscapes) {
  EXPECT_EQ(*js::decode_string_literal(R"("a\"b\\c\n")"), "a\"b\\c\n");
  EXPECT_EQ(*js::decode_string_literal(R"('it\'s')"), "it's");
  EXPECT_EQ(*js::decode_string_literal(R"("\x41é")"), "A\xC3\xA9");
  EXPECT_EQ(*js::decode_string_literal(R"("\uD83D\uDE00")"), "\xF0\x9F\x98\x80");
  EXPECT_EQ(*js::decode_string_literal(R"("\u{1F600}")"), "\xF0\x9F\x98\x80");
  EXPECT_FALSE(js::decode_string_literal(R"("\x4")"));
  EXPECT_FALSE(js::decode_string_literal("abc"));
}

TEST(JsScan, RelaxedJsonNormalizesCommonLooseness) {
  auto strict = js::relaxed_json_to_strict(R"({
    a: 'one', "b": [1, 2,], // trailing comment
    c: {d: !0, e: !1, f: undefined,}, /* block */
  })");
  ASSERT_TRUE(strict);
  auto j = nlohmann::json::parse(*strict);
  EXPECT_EQ(j["a"], "one");
  EXPECT_EQ(j["b"].size(), 2u);
  EXPECT_EQ(j["c"]["d"], true);
  EXPECT_EQ(j["c"]["e"], false);
  EXPECT_TRUE(j["c"]["f"].is_null());
}

TEST(JsScan, RelaxedJsonDropsElisions) {
  auto strict = js::relaxed_json_to_strict(R"({ ... "k": [{ ... "v": "x" }], ... })");
  ASSERT_TRUE(strict);
  auto j = nlohmann::json::parse(*strict);
  EXPECT_EQ(j["k"][0]["v"], "x");
}

TEST(JsScan, RelaxedJsonRejectsCode) {
  EXPECT_FALSE(js::relaxed_json_to_strict("{a: b}"));
  EXPECT_FALSE(js::relaxed_json_to_strict("foo(1)"));
  EXPECT_FALSE(js::relaxed_json_to_strict("{a: 1 + 2}"));
}

TEST(JsScan, RelaxedJsonNumbers) {
  auto strict = js::relaxed_json_to_strict("[.5, -.25, 0x1F, +3, 1e3]");
  ASSERT_TRUE(strict);
  auto j = nlohmann::json::parse(*strict);
  EXPECT_DOUBLE_EQ(j[0].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j[1].get<double>(), -0.25);
  EXPECT_EQ(j[2].get<int>(), 31);
  EXPECT_EQ(j[3].get<int>(), 3);
  EXPECT_DOUBLE_EQ(j[4].get<double>(), 1000.0);
}

TEST(JsScan, ForEachCodePositionSkipsNonCode) {
  std::string_view text = R"(a"b"/*c*/d//e
f)";
  std::string seen;
  js::for_each_code_position(text, [&](std::size_t i) { seen.push_back(text[i]); });
  EXPECT_EQ(seen, "ad\nf");
}
