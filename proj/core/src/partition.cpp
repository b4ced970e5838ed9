#include "vaultor/partition.hpp"

#include <fstream>
#include <iterator>

#include "vaultor/error.hpp"

namespace vaultor {

namespace fs = std::filesystem;

Partition::Partition(fs::path root, tee::ResourceMeter& meter)
    : root_(std::move(root)), meter_(meter) {
  fs::create_directories(root_);
  std::int64_t existing = 0;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".tmp") {
      fs::remove(entry.path());
      continue;
    }
    existing += static_cast<std::int64_t>(entry.file_size());
  }
  meter_.reset_disk(existing);
}

fs::path Partition::file(const std::string& name) const {
  if (name.empty() || name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
    fail(ErrorCode::kInvalidPath, "bad partition file name: " + name);
  }
  return root_ / name;
}

void Partition::write_atomic(const std::string& name, ByteView data) {
  std::lock_guard lock(mu_);
  auto target = file(name);
  std::int64_t old_size = fs::exists(target) ? static_cast<std::int64_t>(fs::file_size(target)) : 0;
  auto new_size = static_cast<std::int64_t>(data.size());
  if (!meter_.try_set_disk(old_size, new_size)) {
    fail(ErrorCode::kQuotaExceeded, "disk quota exceeded writing " + name);
  }
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      meter_.try_set_disk(new_size, old_size);
      std::error_code ec;
      fs::remove(tmp, ec);
      fail(ErrorCode::kBackupFailed, "write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, target);
}

std::optional<Bytes> Partition::read(const std::string& name) const {
  std::lock_guard lock(mu_);
  std::ifstream in(file(name), std::ios::binary);
  if (!in) return std::nullopt;
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool Partition::exists(const std::string& name) const {
  std::lock_guard lock(mu_);
  return fs::exists(file(name));
}

void Partition::remove(const std::string& name) {
  std::lock_guard lock(mu_);
  auto target = file(name);
  if (!fs::exists(target)) return;
  auto size = static_cast<std::int64_t>(fs::file_size(target));
  fs::remove(target);
  meter_.try_set_disk(size, 0);
}

std::int64_t Partition::used_bytes() const { return meter_.disk_used(); }

}  // namespace vaultor
