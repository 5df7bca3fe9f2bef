#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ndt/labeling.hpp"
#include "ndt/vtwin.hpp"

namespace ndt {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);

struct TrafficRecord {
  int flow_id = 0;
  double timestamp_s = 0.0;
  FlowFeatures x{};
  Path path;
  NodeId origin = 0;
  NodeId destination = 0;

  bool operator==(const TrafficRecord&) const = default;
};

struct LabeledRecord {
  TrafficRecord traffic;
  std::vector<LinkFeatures> link_context;
  double y = 0.0;
  std::int64_t snapshot = 0;
  int phase = 0;

  bool operator==(const LabeledRecord&) const = default;
};

TrafficRecord to_traffic_record(const LabeledExample& ex);
LabeledRecord to_labeled_record(const LabeledExample& ex);
LabeledExample to_example(const LabeledRecord& rec);

/// Timestamp interval [from_s, to_s).
struct ScanRange {
  double from_s = -std::numeric_limits<double>::infinity();
  double to_s = std::numeric_limits<double>::infinity();

  bool contains(double t) const { return t >= from_s && t < to_s; }
};

struct CorruptRecord {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

template <class Record>
struct ScanResult {
  std::vector<Record> records;
  std::vector<CorruptRecord> corrupt;
};

/// Append-only line-delimited store: a header line naming schema, version
/// and units, then one JSON object per record carrying its own digest.
template <class Record>
class RecordStore {
 public:
  /// Creates the file with a header, or checks the header of an existing one.
  explicit RecordStore(std::filesystem::path file);

  void append(const Record& rec);
  ScanResult<Record> scan(const ScanRange& range = {}) const;
  const std::filesystem::path& path() const { return file_; }

 private:
  std::filesystem::path file_;
  std::ofstream out_;
};

using TrafficStore = RecordStore<TrafficRecord>;
using LabeledStore = RecordStore<LabeledRecord>;

struct WeightsEntry {
  std::uint64_t version = 0;
  double timestamp_s = 0.0;
  std::string digest;
  std::string file;
};

/// Directory of serialized weights (v<N>.ndtw) plus an index file.
class WeightsStore {
 public:
  explicit WeightsStore(std::filesystem::path dir);

  /// Persists `w` under its own version. Throws StoreError if the version
  /// is already archived or the write fails.
  WeightsEntry save_weights(const ModelWeights& w, double timestamp_s);
  /// Throws StoreError for unknown versions or digest mismatches.
  ModelWeights load_weights(std::uint64_t version) const;
  std::vector<WeightsEntry> entries() const;
  bool contains(std::uint64_t version) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace ndt
