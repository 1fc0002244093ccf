#include "gflow/object_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>

#include <openssl/evp.h>

#include "gflow/error.hpp"

namespace gflow {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kTempPrefix = ".gflow-tmp-";

void validate_key(std::string_view key) {
  if (key.empty()) return;
  if (key.front() == '/') throw Error(Errc::InvalidUri, "object key must be relative: '" + std::string(key) + "'");
  std::size_t start = 0;
  while (start <= key.size()) {
    auto slash = key.find('/', start);
    std::string_view seg = key.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
    if (seg.empty() || seg == "." || seg == "..") {
      throw Error(Errc::InvalidUri, "object key has an empty, '.' or '..' segment: '" + std::string(key) + "'");
    }
    if (seg.substr(0, kTempPrefix.size()) == kTempPrefix) {
      throw Error(Errc::InvalidUri, "object key uses a reserved name: '" + std::string(key) + "'");
    }
    if (seg.find('\0') != std::string_view::npos || seg.find('\\') != std::string_view::npos) {
      throw Error(Errc::InvalidUri, "object key has a forbidden character: '" + std::string(key) + "'");
    }
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
}

std::string temp_name() {
  static std::atomic<std::uint64_t> counter{0};
  thread_local std::mt19937_64 rng{std::random_device{}()};
  return std::string(kTempPrefix) + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
         std::to_string(rng());
}

std::string to_hex(const unsigned char* data, std::size_t size) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(size * 2);
  for (std::size_t i = 0; i < size; ++i) {
    out += kDigits[data[i] >> 4];
    out += kDigits[data[i] & 0xf];
  }
  return out;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw Error(Errc::IoFailure, "sha256 initialisation failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const char* data, std::size_t size) { EVP_DigestUpdate(ctx_, data, size); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md.data(), &len);
    return to_hex(md.data(), len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

void write_all(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

void copy_into(const fs::path& source, const fs::path& target) {
  std::error_code ec;
  fs::copy_file(source, target, fs::copy_options::overwrite_existing, ec);
  if (ec) throw Error(Errc::IoFailure, "copy " + source.string() + " -> " + target.string() + ": " + ec.message());
}

// Moves `temp` to `target`. With `exclusive`, an existing target is kept and false is returned.
bool publish(const fs::path& temp, const fs::path& target, bool exclusive) {
  if (exclusive) {
    if (::link(temp.c_str(), target.c_str()) != 0) {
      const int err = errno;
      ::unlink(temp.c_str());
      if (err == EEXIST) return false;
      throw Error(Errc::IoFailure, "publish " + target.string() + ": " + std::strerror(err));
    }
    ::unlink(temp.c_str());
    return true;
  }
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) {
    fs::remove(temp, ec);
    throw Error(Errc::IoFailure, "rename into " + target.string() + " failed");
  }
  return true;
}

bool under(const fs::path& base, const fs::path& candidate) {
  const auto b = base.lexically_normal();
  const auto c = candidate.lexically_normal();
  auto mismatch = std::mismatch(b.begin(), b.end(), c.begin(), c.end());
  return mismatch.first == b.end();
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buffer{};
  while (in) {
    in.read(buffer.data(), buffer.size());
    h.update(buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

StoreUri::StoreUri(std::string bucket_name, std::string object_key) : bucket(std::move(bucket_name)), key(std::move(object_key)) {
  if (!valid_bucket_name(bucket)) {
    throw Error(Errc::InvalidUri, "bucket name must match [a-z0-9-]{3,63}: '" + bucket + "'");
  }
  while (!key.empty() && key.back() == '/') key.pop_back();
  validate_key(key);
}

bool StoreUri::valid_bucket_name(std::string_view name) {
  if (name.size() < 3 || name.size() > 63) return false;
  return std::all_of(name.begin(), name.end(),
                     [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-'; });
}

StoreUri StoreUri::parse(std::string_view text) {
  constexpr std::string_view scheme = "store://";
  if (text.substr(0, scheme.size()) != scheme) {
    throw Error(Errc::InvalidUri, "expected store://<bucket>/<key>, got '" + std::string(text) + "'");
  }
  std::string_view rest = text.substr(scheme.size());
  auto slash = rest.find('/');
  if (slash == std::string_view::npos) return StoreUri(std::string(rest));
  return StoreUri(std::string(rest.substr(0, slash)), std::string(rest.substr(slash + 1)));
}

std::string StoreUri::str() const { return "store://" + bucket + (key.empty() ? "" : "/" + key); }

StoreUri StoreUri::child(std::string_view relative) const {
  std::string rel(relative);
  while (!rel.empty() && rel.front() == '/') rel.erase(rel.begin());
  if (key.empty()) return StoreUri(bucket, rel);
  return StoreUri(bucket, rel.empty() ? key : key + "/" + rel);
}

std::uint64_t StagingManifest::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& e : entries) total += e.size;
  return total;
}

std::string relative_key(const StoreUri& prefix, const StoreUri& object) {
  if (prefix.key.empty()) return object.key;
  if (object.key == prefix.key) {
    auto slash = object.key.rfind('/');
    return slash == std::string::npos ? object.key : object.key.substr(slash + 1);
  }
  return object.key.substr(prefix.key.size() + 1);
}

ObjectStore::ObjectStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create store root " + root_.string() + ": " + ec.message());
}

fs::path ObjectStore::bucket_path(std::string_view bucket) const { return root_ / std::string(bucket); }

fs::path ObjectStore::object_path(const StoreUri& uri) const {
  return uri.key.empty() ? bucket_path(uri.bucket) : bucket_path(uri.bucket) / uri.key;
}

void ObjectStore::create_bucket(std::string_view bucket) {
  if (!StoreUri::valid_bucket_name(bucket)) {
    throw Error(Errc::InvalidUri, "bucket name must match [a-z0-9-]{3,63}: '" + std::string(bucket) + "'");
  }
  std::error_code ec;
  fs::create_directories(bucket_path(bucket), ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create bucket " + std::string(bucket) + ": " + ec.message());
}

bool ObjectStore::has_bucket(std::string_view bucket) const {
  std::error_code ec;
  return StoreUri::valid_bucket_name(bucket) && fs::is_directory(bucket_path(bucket), ec);
}

bool ObjectStore::remove_bucket(std::string_view bucket) {
  if (!has_bucket(bucket)) return false;
  std::error_code ec;
  fs::remove_all(bucket_path(bucket), ec);
  if (ec) throw Error(Errc::IoFailure, "cannot remove bucket " + std::string(bucket) + ": " + ec.message());
  return true;
}

void ObjectStore::require_bucket(std::string_view bucket) const {
  if (!has_bucket(bucket)) throw Error(Errc::NoSuchBucket, "no bucket '" + std::string(bucket) + "'");
}

ObjectMeta ObjectStore::put(const StoreUri& uri, std::string_view bytes) {
  return *put_file_or_bytes(uri, bytes, nullptr, false);
}

ObjectMeta ObjectStore::put_file(const StoreUri& uri, const fs::path& source) {
  return *put_file_or_bytes(uri, {}, &source, false);
}

std::optional<ObjectMeta> ObjectStore::put_if_absent(const StoreUri& uri, std::string_view bytes) {
  return put_file_or_bytes(uri, bytes, nullptr, true);
}

std::optional<ObjectMeta> ObjectStore::put_file_if_absent(const StoreUri& uri, const fs::path& source) {
  return put_file_or_bytes(uri, {}, &source, true);
}

std::optional<ObjectMeta> ObjectStore::put_file_or_bytes(const StoreUri& uri, std::string_view bytes,
                                                         const fs::path* source, bool exclusive) {
  require_bucket(uri.bucket);
  if (uri.key.empty()) throw Error(Errc::InvalidUri, "cannot write to a bucket root: " + uri.str());
  const fs::path target = object_path(uri);
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + target.parent_path().string() + ": " + ec.message());
  if (exclusive && fs::exists(fs::symlink_status(target, ec))) return std::nullopt;

  const fs::path temp = target.parent_path() / temp_name();
  ObjectMeta meta{uri, 0, ""};
  if (source) {
    copy_into(*source, temp);
    meta.size = fs::file_size(temp);
    meta.digest = std::string(kDigestAlgorithm) + ":" + sha256_file_hex(temp);
  } else {
    write_all(temp, bytes);
    meta.size = bytes.size();
    meta.digest = std::string(kDigestAlgorithm) + ":" + sha256_hex(bytes);
  }
  if (!publish(temp, target, exclusive)) return std::nullopt;
  return meta;
}

std::string ObjectStore::get(const StoreUri& uri) const {
  require_bucket(uri.bucket);
  const fs::path path = object_path(uri);
  std::error_code ec;
  if (uri.key.empty() || !fs::is_regular_file(fs::symlink_status(path, ec))) {
    throw Error(Errc::NoSuchObject, "no object " + uri.str());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read " + uri.str());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::optional<ObjectMeta> ObjectStore::stat(const StoreUri& uri) const {
  require_bucket(uri.bucket);
  const fs::path path = object_path(uri);
  std::error_code ec;
  if (uri.key.empty() || !fs::is_regular_file(fs::symlink_status(path, ec))) return std::nullopt;
  return ObjectMeta{uri, fs::file_size(path), std::string(kDigestAlgorithm) + ":" + sha256_file_hex(path)};
}

bool ObjectStore::exists(const StoreUri& uri) const {
  if (!has_bucket(uri.bucket) || uri.key.empty()) return false;
  std::error_code ec;
  return fs::is_regular_file(fs::symlink_status(object_path(uri), ec));
}

std::vector<ObjectInfo> ObjectStore::list(const StoreUri& prefix) const {
  require_bucket(prefix.bucket);
  const fs::path bucket_dir = bucket_path(prefix.bucket);
  const fs::path start = object_path(prefix);
  std::vector<ObjectInfo> out;
  std::error_code ec;
  const auto start_status = fs::symlink_status(start, ec);
  if (fs::is_regular_file(start_status)) {
    out.push_back({prefix, fs::file_size(start)});
    return out;
  }
  if (!fs::is_directory(start_status)) return out;

  for (auto it = fs::recursive_directory_iterator(start, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    const auto status = it->symlink_status();
    const std::string name = it->path().filename().string();
    if (name.rfind(kTempPrefix, 0) == 0) continue;
    if (!fs::is_regular_file(status)) continue;  // directories recurse; symlinks and devices are not objects
    const std::string key = it->path().lexically_relative(bucket_dir).generic_string();
    try {
      out.push_back({StoreUri(prefix.bucket, key), it->file_size()});
    } catch (const Error&) {
      // Files whose names are not valid keys are invisible to the store.
    }
  }
  if (ec) throw Error(Errc::IoFailure, "cannot list " + prefix.str() + ": " + ec.message());
  std::sort(out.begin(), out.end(), [](const ObjectInfo& a, const ObjectInfo& b) { return a.uri.key < b.uri.key; });
  return out;
}

StagingManifest ObjectStore::stage_references(const StoreUri& ref_root, const fs::path& task_disk,
                                              std::int64_t disk_gb) const {
  const auto objects = list(ref_root);
  if (objects.empty()) throw Error(Errc::NoSuchPrefix, "no objects under " + ref_root.str());

  std::uint64_t total = 0;
  for (const auto& o : objects) total += o.size;
  const std::uint64_t capacity = static_cast<std::uint64_t>(std::max<std::int64_t>(disk_gb, 0)) * kGiB;
  if (total > capacity) {
    throw Error(Errc::DiskFull, "references need " + std::to_string(total) + " bytes but the task disk holds " +
                                    std::to_string(capacity) + " (" + std::to_string(disk_gb) + " GB)");
  }

  const fs::path base = task_disk / "reference";
  StagingManifest manifest;
  for (const auto& o : objects) {
    const std::string rel = relative_key(ref_root, o.uri);
    const fs::path target = base / rel;
    if (!under(base, target)) throw Error(Errc::IoFailure, "refusing to stage outside the task disk: " + rel);
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create " + target.parent_path().string() + ": " + ec.message());
    copy_into(object_path(o.uri), target);
    manifest.entries.push_back({o.uri, (fs::path("reference") / rel).generic_string(), o.size});
  }
  return manifest;
}

CopyReport ObjectStore::copy_no_clobber(const StoreUri& src, const fs::path& dst) const {
  const auto objects = list(src);
  std::error_code ec;
  fs::create_directories(dst, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + dst.string() + ": " + ec.message());

  CopyReport report;
  for (const auto& o : objects) {
    const std::string rel = relative_key(src, o.uri);
    const fs::path target = dst / rel;
    if (!under(dst, target)) throw Error(Errc::IoFailure, "refusing to write outside the destination: " + rel);
    if (fs::exists(fs::symlink_status(target, ec))) {
      ++report.skipped;
      continue;
    }
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create " + target.parent_path().string() + ": " + ec.message());
    const fs::path temp = target.parent_path() / temp_name();
    copy_into(object_path(o.uri), temp);
    if (publish(temp, target, /*exclusive=*/true)) {
      ++report.copied;
    } else {
      ++report.skipped;
    }
  }
  return report;
}

}  // namespace gflow
