#pragma once

// JSON reading with source positions. nlohmann::json does not remember where
// a value came from, so parsing goes through a SAX pass over a counting
// iterator that records the byte offset of every object key.

#include "ttsysid/core.hpp"

#include <json.hpp>

#include <cstddef>
#include <iterator>
#include <map>
#include <string>
#include <vector>

namespace ttsysid {

class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

class CountingIterator {
 public:
  using iterator_category = std::forward_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  CountingIterator() = default;
  CountingIterator(const char* p, std::size_t* consumed) : p_(p), consumed_(consumed) {}

  reference operator*() const { return *p_; }
  CountingIterator& operator++() {
    ++p_;
    if (consumed_) ++*consumed_;
    return *this;
  }
  CountingIterator operator++(int) {
    CountingIterator c = *this;
    ++*this;
    return c;
  }
  bool operator==(const CountingIterator& o) const { return p_ == o.p_; }
  bool operator!=(const CountingIterator& o) const { return p_ != o.p_; }

 private:
  const char* p_ = nullptr;
  std::size_t* consumed_ = nullptr;
};

class LocatingSax {
 public:
  using json = nlohmann::json;

  LocatingSax(json& root, const std::size_t* consumed) : dom_(root, true), consumed_(consumed) {}

  bool null() { return dom_.null(); }
  bool boolean(bool v) { return dom_.boolean(v); }
  bool number_integer(json::number_integer_t v) { return dom_.number_integer(v); }
  bool number_unsigned(json::number_unsigned_t v) { return dom_.number_unsigned(v); }
  bool number_float(json::number_float_t v, const std::string& s) { return dom_.number_float(v, s); }
  bool string(std::string& v) { return dom_.string(v); }
  bool binary(json::binary_t& v) { return dom_.binary(v); }
  bool start_object(std::size_t n) {
    path_.emplace_back();
    return dom_.start_object(n);
  }
  bool key(std::string& k) {
    path_.back() = k;
    // The lexer has just consumed the closing quote; step back to the open.
    const std::size_t back = k.size() + 2;
    keys_[joined()] = *consumed_ >= back ? *consumed_ - back : 0;
    return dom_.key(k);
  }
  bool end_object() {
    path_.pop_back();
    return dom_.end_object();
  }
  bool start_array(std::size_t n) {
    path_.push_back("[]");
    return dom_.start_array(n);
  }
  bool end_array() {
    path_.pop_back();
    return dom_.end_array();
  }
  template <class Exception>
  bool parse_error(std::size_t pos, const std::string& tok, const Exception& e) {
    return dom_.parse_error(pos, tok, e);
  }

  std::map<std::string, std::size_t> take_keys() { return std::move(keys_); }

 private:
  std::string joined() const {
    std::string s;
    for (const auto& p : path_) s += "/" + p;
    return s;
  }

  nlohmann::detail::json_sax_dom_parser<json> dom_;
  const std::size_t* consumed_;
  std::vector<std::string> path_;
  std::map<std::string, std::size_t> keys_;
};

}  // namespace detail

// A parsed document plus the offsets of its keys, for error messages of the
// form "name:line:col: message".
class LocatedJson {
 public:
  using json = nlohmann::json;

  LocatedJson(std::string text, std::string name) : text_(std::move(text)), name_(std::move(name)) {
    std::size_t consumed = 0;
    detail::CountingIterator first(text_.data(), &consumed), last(text_.data() + text_.size(), nullptr);
    detail::LocatingSax sax(root_, &consumed);
    try {
      json::sax_parse(first, last, &sax);
    } catch (const json::parse_error& e) {
      // The byte field is 1-based and points just past the offending token.
      const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
      std::string what = e.what();
      const auto cut = what.find("syntax error");
      throw ConfigError(where(at) + ": " + (cut == std::string::npos ? what : what.substr(cut)));
    }
    keys_ = sax.take_keys();
  }

  const json& root() const { return root_; }
  const std::string& name() const { return name_; }

  // Location of the key at path ("/solver/max_sweeps"), or of the document
  // start when unknown.
  std::string where(const std::string& path) const {
    const auto it = keys_.find(path);
    return where(it == keys_.end() ? 0 : it->second);
  }

  std::string where(std::size_t offset) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return name_ + ":" + std::to_string(line) + ":" + std::to_string(col);
  }

  [[noreturn]] void fail(const std::string& path, const std::string& message) const {
    throw ConfigError(where(path) + ": " + message);
  }

 private:
  std::string text_;
  std::string name_;
  json root_;
  std::map<std::string, std::size_t> keys_;
};

}  // namespace ttsysid
