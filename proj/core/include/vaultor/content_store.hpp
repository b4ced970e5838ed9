#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "vaultor/bytes.hpp"
#include "vaultor/crypto.hpp"

namespace vaultor {

/// Rooted virtual path: "/" separated, no "." or ".." segments, no empty
/// segments. "index.html" and "/a//b/./c" normalize to "/index.html" and
/// "/a/b/c". Throws Error(kInvalidPath) on traversal, NUL bytes or empty paths.
std::string normalize_path(std::string_view path);

struct ContentEntry {
  Bytes content;
  std::int64_t timestamp = 0;
  crypto::Digest content_hash{};
};

/// Hosted web content with byte accounting. Not synchronized; the host
/// program guards it.
class ContentStore {
 public:
  /// Creates or replaces an entry; path must already be normalized.
  void put(const std::string& path, Bytes content, std::int64_t timestamp);
  bool remove(const std::string& path);
  const ContentEntry* find(const std::string& path) const;

  /// Accounted size after replacing `path` with `new_size` bytes.
  std::int64_t total_after_put(const std::string& path, std::int64_t new_size) const;
  std::int64_t total_bytes() const { return total_bytes_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, ContentEntry>& entries() const { return entries_; }

  Bytes serialize() const;
  /// Throws Error(kMalformedMessage) on a corrupt snapshot.
  static ContentStore deserialize(ByteView bytes);

  friend bool operator==(const ContentStore& a, const ContentStore& b);

 private:
  std::map<std::string, ContentEntry> entries_;
  std::int64_t total_bytes_ = 0;
};

}  // namespace vaultor
