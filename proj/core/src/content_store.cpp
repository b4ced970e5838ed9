#include "vaultor/content_store.hpp"

#include <vector>

#include "vaultor/error.hpp"

namespace vaultor {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

class Reader {
 public:
  explicit Reader(ByteView data) : data_(data) {}

  std::uint64_t u(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }
  ByteView take(std::size_t n) {
    need(n);
    auto v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(ErrorCode::kMalformedMessage, "truncated content snapshot");
  }

  ByteView data_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kSnapshotMagic = "VCS1";

}  // namespace

std::string normalize_path(std::string_view path) {
  if (path.empty()) fail(ErrorCode::kInvalidPath, "empty path");
  if (path.find('\0') != std::string_view::npos) fail(ErrorCode::kInvalidPath, "NUL in path");
  std::vector<std::string_view> segments;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    auto seg = path.substr(start, end - start);
    if (seg == "..") fail(ErrorCode::kInvalidPath, "path traversal");
    if (!seg.empty() && seg != ".") segments.push_back(seg);
    start = end + 1;
  }
  if (segments.empty()) fail(ErrorCode::kInvalidPath, "path names no file");
  std::string out;
  for (auto seg : segments) {
    out += '/';
    out += seg;
  }
  return out;
}

void ContentStore::put(const std::string& path, Bytes content, std::int64_t timestamp) {
  total_bytes_ = total_after_put(path, static_cast<std::int64_t>(content.size()));
  ContentEntry entry;
  entry.content_hash = crypto::sha256(content);
  entry.content = std::move(content);
  entry.timestamp = timestamp;
  entries_[path] = std::move(entry);
}

bool ContentStore::remove(const std::string& path) {
  auto it = entries_.find(path);
  if (it == entries_.end()) return false;
  total_bytes_ -= static_cast<std::int64_t>(it->second.content.size());
  entries_.erase(it);
  return true;
}

const ContentEntry* ContentStore::find(const std::string& path) const {
  auto it = entries_.find(path);
  return it == entries_.end() ? nullptr : &it->second;
}

std::int64_t ContentStore::total_after_put(const std::string& path, std::int64_t new_size) const {
  std::int64_t total = total_bytes_ + new_size;
  if (auto* e = find(path)) total -= static_cast<std::int64_t>(e->content.size());
  return total;
}

Bytes ContentStore::serialize() const {
  Bytes out = to_bytes(kSnapshotMagic);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [path, entry] : entries_) {
    put_u32(out, static_cast<std::uint32_t>(path.size()));
    append(out, as_bytes(path));
    put_u64(out, static_cast<std::uint64_t>(entry.timestamp));
    put_u64(out, entry.content.size());
    append(out, entry.content);
  }
  return out;
}

ContentStore ContentStore::deserialize(ByteView bytes) {
  Reader r(bytes);
  if (to_string(r.take(kSnapshotMagic.size())) != kSnapshotMagic) {
    fail(ErrorCode::kMalformedMessage, "not a content snapshot");
  }
  ContentStore store;
  auto count = r.u(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto path = to_string(r.take(r.u(4)));
    auto ts = static_cast<std::int64_t>(r.u(8));
    auto body = r.take(r.u(8));
    store.put(normalize_path(path), Bytes(body.begin(), body.end()), ts);
  }
  if (!r.done()) fail(ErrorCode::kMalformedMessage, "trailing bytes in snapshot");
  return store;
}

bool operator==(const ContentStore& a, const ContentStore& b) {
  if (a.total_bytes_ != b.total_bytes_ || a.entries_.size() != b.entries_.size()) return false;
  auto it = b.entries_.begin();
  for (const auto& [path, entry] : a.entries_) {
    if (path != it->first || entry.content_hash != it->second.content_hash ||
        entry.timestamp != it->second.timestamp) {
      return false;
    }
    ++it;
  }
  return true;
}

}  // namespace vaultor
