#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pixelarch {

// Base for every failure the toolchain reports. `code()` is the stable,
// machine-readable name emitted by the CLI in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ArchiveUnavailable : public Error {
 public:
  ArchiveUnavailable(const std::string& message, int attempts)
      : Error("ArchiveUnavailable", message), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class MalformedCdxResponse : public Error {
 public:
  MalformedCdxResponse(const std::string& message, std::size_t bad_rows)
      : Error("MalformedCdxResponse", message), bad_rows_(bad_rows) {}
  std::size_t bad_rows() const noexcept { return bad_rows_; }

 private:
  std::size_t bad_rows_;
};

class SnapshotFetchFailed : public Error {
 public:
  SnapshotFetchFailed(const std::string& message, int attempts, int last_status)
      : Error("SnapshotFetchFailed", message),
        attempts_(attempts),
        last_status_(last_status) {}
  int attempts() const noexcept { return attempts_; }
  // 0 when the last attempt never produced an HTTP response.
  int last_status() const noexcept { return last_status_; }

 private:
  int attempts_;
  int last_status_;
};

class ArchiveErrorPage : public Error {
 public:
  explicit ArchiveErrorPage(const std::string& message)
      : Error("ArchiveErrorPage", message) {}
};

class StorageIo : public Error {
 public:
  explicit StorageIo(const std::string& message) : Error("StorageIo", message) {}
};

class NoRegisterPluginRegion : public Error {
 public:
  explicit NoRegisterPluginRegion(const std::string& message)
      : Error("NoRegisterPluginRegion", message) {}
};

class InvalidInteraction : public Error {
 public:
  explicit InvalidInteraction(const std::string& message)
      : Error("InvalidInteraction", message) {}
};

class EmptyDictionary : public Error {
 public:
  EmptyDictionary() : Error("EmptyDictionary", "no dictionary candidates loaded") {}
};

class DegenerateTest : public Error {
 public:
  explicit DegenerateTest(const std::string& message)
      : Error("DegenerateTest", message) {}
};

class MissingPrerequisite : public Error {
 public:
  explicit MissingPrerequisite(const std::string& stage)
      : Error("MissingPrerequisite", "missing output of stage '" + stage + "'"),
        stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error("InvalidArgument", message) {}
};

}  // namespace pixelarch
