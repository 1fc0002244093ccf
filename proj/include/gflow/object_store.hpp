#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gflow {

// `store://<bucket>/<key>`; an empty key names the whole bucket.
struct StoreUri {
  std::string bucket;
  std::string key;

  StoreUri() = default;
  // Validates both parts. Throws Error(InvalidUri).
  StoreUri(std::string bucket, std::string key = "");

  static StoreUri parse(std::string_view text);
  static bool valid_bucket_name(std::string_view name);

  std::string str() const;
  // `key/relative`, with relative validated as a key.
  StoreUri child(std::string_view relative) const;

  bool operator==(const StoreUri&) const = default;
  auto operator<=>(const StoreUri&) const = default;
};

inline constexpr std::string_view kDigestAlgorithm = "sha256";

struct ObjectMeta {
  StoreUri uri;
  std::uint64_t size = 0;
  std::string digest;  // "sha256:<hex>"
};

struct ObjectInfo {
  StoreUri uri;
  std::uint64_t size = 0;
};

struct StagingEntry {
  StoreUri source;
  std::string destination;  // relative to the task disk
  std::uint64_t size = 0;
};

struct StagingManifest {
  std::vector<StagingEntry> entries;

  std::uint64_t total_bytes() const;
};

struct CopyReport {
  std::size_t copied = 0;
  std::size_t skipped = 0;

  bool operator==(const CopyReport&) const = default;
};

inline constexpr std::uint64_t kGiB = std::uint64_t{1} << 30;

// Buckets are directories under a root; object keys are relative file paths. Writes land in a
// temporary file first and are renamed into place, so readers never see a partial object.
class ObjectStore {
 public:
  explicit ObjectStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  void create_bucket(std::string_view bucket);
  bool has_bucket(std::string_view bucket) const;
  // Removes the bucket and all its objects; false if it did not exist.
  bool remove_bucket(std::string_view bucket);

  // Last write wins. Throws NoSuchBucket, IoFailure.
  ObjectMeta put(const StoreUri& uri, std::string_view bytes);
  ObjectMeta put_file(const StoreUri& uri, const std::filesystem::path& source);

  // Never replaces an existing object; nullopt when one was already there.
  std::optional<ObjectMeta> put_if_absent(const StoreUri& uri, std::string_view bytes);
  std::optional<ObjectMeta> put_file_if_absent(const StoreUri& uri, const std::filesystem::path& source);

  // Throws NoSuchBucket, NoSuchObject.
  std::string get(const StoreUri& uri) const;
  std::optional<ObjectMeta> stat(const StoreUri& uri) const;
  bool exists(const StoreUri& uri) const;

  // Objects equal to or below `prefix` in key order. Throws NoSuchBucket.
  std::vector<ObjectInfo> list(const StoreUri& prefix) const;

  // Copies every object under `ref_root` to `task_disk/reference/<relative key>`.
  // Throws NoSuchPrefix, DiskFull (before copying anything) or IoFailure.
  StagingManifest stage_references(const StoreUri& ref_root, const std::filesystem::path& task_disk,
                                   std::int64_t disk_gb) const;

  // Recursive copy into `dst`; existing destination files are skipped, never overwritten.
  CopyReport copy_no_clobber(const StoreUri& src, const std::filesystem::path& dst) const;

  std::filesystem::path object_path(const StoreUri& uri) const;

 private:
  std::filesystem::path bucket_path(std::string_view bucket) const;
  void require_bucket(std::string_view bucket) const;
  std::optional<ObjectMeta> put_file_or_bytes(const StoreUri& uri, std::string_view bytes,
                                              const std::filesystem::path* source, bool exclusive);

  std::filesystem::path root_;
};

// Relative path of an object below a listing prefix (the file name when the prefix is the object itself).
std::string relative_key(const StoreUri& prefix, const StoreUri& object);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace gflow
