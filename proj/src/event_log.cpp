#include "gflow/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gflow/error.hpp"

namespace gflow {

std::string encode_event(const Event& event) {
  nlohmann::ordered_json doc;
  doc["seq"] = event.seq;
  doc["time"] = to_exact_string(event.time);
  doc["job_id"] = event.job_id;
  if (event.sample_id) doc["sample_id"] = *event.sample_id;
  doc["event"] = event.type;
  doc["payload"] = event.payload;
  return doc.dump();
}

Event decode_event(std::string_view line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::CorruptLog, std::string("malformed record: ") + e.what());
  }
  try {
    Event event;
    event.seq = doc.at("seq").get<std::uint64_t>();
    event.time = parse_rational(doc.at("time").get<std::string>());
    event.job_id = doc.at("job_id").get<std::string>();
    if (doc.contains("sample_id")) event.sample_id = doc.at("sample_id").get<std::string>();
    event.type = doc.at("event").get<std::string>();
    event.payload = doc.value("payload", nlohmann::json::object());
    return event;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptLog, std::string("incomplete record: ") + e.what());
  } catch (const Error& e) {
    throw Error(Errc::CorruptLog, e.detail());
  }
}

std::string MemoryEventLog::text() const {
  std::string out;
  for (const auto& line : lines_) {
    out += line;
    out += '\n';
  }
  return out;
}

FileEventLog::FileEventLog(const std::filesystem::path& path, bool fsync_each) : path_(path), fsync_each_(fsync_each) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(Errc::IoFailure, "cannot open event log " + path.string() + ": " + std::strerror(errno));
}

FileEventLog::~FileEventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void FileEventLog::append(const Event& event) {
  const std::string line = encode_event(event) + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::IoFailure, "event log write failed: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }
  if (fsync_each_) ::fsync(fd_);
}

LogContents parse_event_log(std::string_view text) {
  LogContents contents;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      contents.corruption = CorruptRecord{line_no, "truncated final record (no newline)"};
      return contents;
    }
    const std::string_view line = text.substr(pos, nl - pos);
    try {
      Event event = decode_event(line);
      const std::uint64_t expected = contents.events.empty() ? 1 : contents.events.back().seq + 1;
      if (event.seq != expected) {
        throw Error(Errc::CorruptLog, "expected seq " + std::to_string(expected) + ", found " + std::to_string(event.seq));
      }
      contents.events.push_back(std::move(event));
    } catch (const Error& e) {
      contents.corruption = CorruptRecord{line_no, e.detail()};
      return contents;
    }
    pos = nl + 1;
    contents.valid_bytes = pos;
  }
  return contents;
}

LogContents read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::UnknownJob, "no event log at " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_event_log(buffer.str());
}

}  // namespace gflow
