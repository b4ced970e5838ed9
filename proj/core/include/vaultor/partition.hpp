#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

#include "vaultor/bytes.hpp"
#include "vaultor/tee_sim.hpp"

namespace vaultor {

/// The enclave's slice of the vault's disk: a flat directory whose committed
/// file sizes are charged against the meter's disk limit. Writes go to a
/// temporary file first and are renamed into place, so a reader never sees a
/// partially written file and a failed write leaves the old file intact.
class Partition {
 public:
  Partition(std::filesystem::path root, tee::ResourceMeter& meter);

  /// Throws Error(kQuotaExceeded) if committing would exceed the disk limit.
  void write_atomic(const std::string& name, ByteView data);
  std::optional<Bytes> read(const std::string& name) const;
  bool exists(const std::string& name) const;
  void remove(const std::string& name);

  const std::filesystem::path& root() const { return root_; }
  std::int64_t used_bytes() const;

 private:
  std::filesystem::path file(const std::string& name) const;

  std::filesystem::path root_;
  tee::ResourceMeter& meter_;
  mutable std::mutex mu_;
};

}  // namespace vaultor
