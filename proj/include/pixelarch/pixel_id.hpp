#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace pixelarch {

// Meta-assigned numeric Pixel identifier, kept as its decimal text.
class PixelId {
 public:
  static constexpr std::size_t kMinLength = 5;
  static constexpr std::size_t kMaxLength = 20;

  PixelId() = default;

  static bool valid(std::string_view s) {
    if (s.size() < kMinLength || s.size() > kMaxLength) return false;
    for (char c : s) {
      if (c < '0' || c > '9') return false;
    }
    return true;
  }

  static std::optional<PixelId> parse(std::string_view s) {
    if (!valid(s)) return std::nullopt;
    PixelId id;
    id.value_ = std::string(s);
    return id;
  }

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  auto operator<=>(const PixelId&) const = default;

 private:
  std::string value_;
};

}  // namespace pixelarch
