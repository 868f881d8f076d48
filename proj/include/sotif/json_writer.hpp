#pragma once

// Streaming JSON emitter with fixed six-decimal number formatting so that
// every artifact the toolkit writes is byte-stable. Parsing goes through
// nlohmann::json; only output needs this.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sotif {

/// Fixed-point decimal with `decimals` fractional digits, locale-independent.
/// Non-finite values become "inf", "-inf" or "nan". Negative zero prints as zero.
std::string format_fixed(double value, int decimals = 6);

class JsonWriter {
 public:
  /// indent = 0 gives compact output; otherwise pretty-printed with that many spaces.
  explicit JsonWriter(int indent = 2) : indent_(indent) {}

  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(std::string_view k);

  JsonWriter& value(std::string_view s);
  JsonWriter& value(const char* s) { return value(std::string_view(s)); }
  JsonWriter& value(double v);
  JsonWriter& value(std::int64_t v);
  JsonWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }
  JsonWriter& value(std::size_t v) { return value(static_cast<std::int64_t>(v)); }
  JsonWriter& value(bool v);
  JsonWriter& null();
  /// A number that may be +inf: finite values as numbers, +inf as the string "inf".
  JsonWriter& value_or_inf(double v);
  JsonWriter& array(std::span<const double> values);

  template <typename T>
  JsonWriter& field(std::string_view k, const T& v) {
    key(k);
    return value(v);
  }

  /// Output so far plus a trailing newline once the root value is closed.
  std::string str() const;

 private:
  void before_value();
  void newline();
  void raw(std::string_view s) { out_.append(s); }

  struct Level {
    bool is_object;
    bool empty = true;
  };

  int indent_;
  std::string out_;
  std::vector<Level> stack_;
  bool after_key_ = false;
};

std::string json_escape(std::string_view s);

}  // namespace sotif
