#include "ndt/datastore.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace ndt {

using nlohmann::json;

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw StoreError("SHA-256 computation failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
  return hex.str();
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

TrafficRecord to_traffic_record(const LabeledExample& ex) {
  return {ex.flow.flow_id, ex.flow.start_s, ex.x_f, ex.path, ex.flow.origin, ex.flow.destination};
}

LabeledRecord to_labeled_record(const LabeledExample& ex) {
  return {to_traffic_record(ex), ex.link_context, ex.y, ex.snapshot, ex.flow.phase};
}

LabeledExample to_example(const LabeledRecord& rec) {
  LabeledExample ex;
  ex.flow.flow_id = rec.traffic.flow_id;
  ex.flow.origin = rec.traffic.origin;
  ex.flow.destination = rec.traffic.destination;
  ex.flow.start_s = rec.traffic.timestamp_s;
  ex.flow.phase = rec.phase;
  ex.x_f = rec.traffic.x;
  ex.path = rec.traffic.path;
  ex.link_context = rec.link_context;
  ex.y = rec.y;
  ex.snapshot = rec.snapshot;
  return ex;
}

namespace {

constexpr int kSchemaVersion = 1;

template <class Record>
struct Schema;

template <>
struct Schema<TrafficRecord> {
  static constexpr const char* name = "ndt.traffic";

  static json units() {
    return {{"timestamp", "s"},
            {"x", {"bits/s", "s", "links", "packets", "packets/s"}}};
  }
  static json to_json(const TrafficRecord& r) {
    return {{"flow_id", r.flow_id}, {"timestamp", r.timestamp_s}, {"x", r.x},
            {"path", r.path},       {"origin", r.origin},         {"destination", r.destination}};
  }
  static TrafficRecord from_json(const json& j) {
    TrafficRecord r;
    r.flow_id = j.at("flow_id").get<int>();
    r.timestamp_s = j.at("timestamp").get<double>();
    r.x = j.at("x").get<FlowFeatures>();
    r.path = j.at("path").get<Path>();
    r.origin = j.at("origin").get<NodeId>();
    r.destination = j.at("destination").get<NodeId>();
    return r;
  }
  static double timestamp(const TrafficRecord& r) { return r.timestamp_s; }
};

template <>
struct Schema<LabeledRecord> {
  static constexpr const char* name = "ndt.labeled";

  static json units() {
    json u = Schema<TrafficRecord>::units();
    u["link_context"] = {"bits/s", "fraction"};
    u["y"] = "s";
    return u;
  }
  static json to_json(const LabeledRecord& r) {
    json j = Schema<TrafficRecord>::to_json(r.traffic);
    j["link_context"] = r.link_context;
    j["y"] = r.y;
    j["snapshot"] = r.snapshot;
    j["phase"] = r.phase;
    return j;
  }
  static LabeledRecord from_json(const json& j) {
    LabeledRecord r;
    r.traffic = Schema<TrafficRecord>::from_json(j);
    r.link_context = j.at("link_context").get<std::vector<LinkFeatures>>();
    r.y = j.at("y").get<double>();
    r.snapshot = j.at("snapshot").get<std::int64_t>();
    r.phase = j.at("phase").get<int>();
    if (r.link_context.size() != r.traffic.path.size()) throw StoreError("link context does not match path length");
    return r;
  }
  static double timestamp(const LabeledRecord& r) { return r.traffic.timestamp_s; }
};

json header_for(const char* schema, const json& units) {
  return {{"schema", schema}, {"version", kSchemaVersion}, {"units", units}};
}

}  // namespace

template <class Record>
RecordStore<Record>::RecordStore(std::filesystem::path file) : file_(std::move(file)) {
  using S = Schema<Record>;
  if (std::filesystem::exists(file_) && std::filesystem::file_size(file_) > 0) {
    std::ifstream in(file_);
    std::string line;
    std::getline(in, line);
    json header;
    try {
      header = json::parse(line);
    } catch (const json::exception& e) {
      throw StoreError(file_.string() + ": unreadable header: " + e.what());
    }
    if (header.value("schema", "") != S::name || header.value("version", 0) != kSchemaVersion) {
      throw StoreError(file_.string() + ": expected schema " + S::name + " version " + std::to_string(kSchemaVersion));
    }
  } else {
    std::ofstream init(file_, std::ios::binary | std::ios::trunc);
    if (!init) throw StoreError("cannot create " + file_.string());
    init << header_for(S::name, S::units()).dump() << '\n';
  }
  out_.open(file_, std::ios::binary | std::ios::app);
  if (!out_) throw StoreError("cannot open " + file_.string() + " for append");
}

template <class Record>
void RecordStore<Record>::append(const Record& rec) {
  json j = Schema<Record>::to_json(rec);
  j["digest"] = sha256_hex(j.dump());
  out_ << j.dump() << '\n';
  out_.flush();
  if (!out_) throw StoreError("append to " + file_.string() + " failed");
}

template <class Record>
ScanResult<Record> RecordStore<Record>::scan(const ScanRange& range) const {
  ScanResult<Record> result;
  std::ifstream in(file_, std::ios::binary);
  if (!in) throw StoreError("cannot read " + file_.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1 || line.empty()) continue;
    if (in.eof()) {
      result.corrupt.push_back({number, "unterminated final line"});
      break;
    }
    try {
      json j = json::parse(line);
      const std::string digest = j.at("digest").get<std::string>();
      j.erase("digest");
      if (sha256_hex(j.dump()) != digest) {
        result.corrupt.push_back({number, "digest mismatch"});
        continue;
      }
      Record rec = Schema<Record>::from_json(j);
      if (range.contains(Schema<Record>::timestamp(rec))) result.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      result.corrupt.push_back({number, e.what()});
    }
  }
  return result;
}

template class RecordStore<TrafficRecord>;
template class RecordStore<LabeledRecord>;

namespace {

constexpr const char* kIndexFile = "index.jsonl";

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StoreError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

WeightsStore::WeightsStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw StoreError("cannot create weights directory " + dir_.string() + ": " + ec.message());
}

std::vector<WeightsEntry> WeightsStore::entries() const {
  std::vector<WeightsEntry> out;
  std::ifstream in(dir_ / kIndexFile);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("version").get<std::uint64_t>(), j.at("timestamp").get<double>(),
                     j.at("digest").get<std::string>(), j.at("file").get<std::string>()});
    } catch (const json::exception& e) {
      throw StoreError("corrupt weights index line: " + std::string(e.what()));
    }
  }
  return out;
}

bool WeightsStore::contains(std::uint64_t version) const {
  const auto all = entries();
  return std::any_of(all.begin(), all.end(), [&](const WeightsEntry& e) { return e.version == version; });
}

WeightsEntry WeightsStore::save_weights(const ModelWeights& w, double timestamp_s) {
  if (contains(w.version)) throw StoreError("weights version " + std::to_string(w.version) + " already archived");
  const auto bytes = serialize_weights(w);
  WeightsEntry e{w.version, timestamp_s, sha256_hex(bytes), "v" + std::to_string(w.version) + ".ndtw"};
  {
    std::ofstream out(dir_ / e.file, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw StoreError("cannot write " + (dir_ / e.file).string());
  }
  std::ofstream index(dir_ / kIndexFile, std::ios::binary | std::ios::app);
  index << json{{"version", e.version}, {"timestamp", e.timestamp_s}, {"digest", e.digest}, {"file", e.file}}.dump()
        << '\n';
  index.flush();
  if (!index) throw StoreError("cannot update weights index in " + dir_.string());
  return e;
}

ModelWeights WeightsStore::load_weights(std::uint64_t version) const {
  for (const auto& e : entries()) {
    if (e.version != version) continue;
    const auto bytes = read_bytes(dir_ / e.file);
    if (sha256_hex(bytes) != e.digest) {
      throw StoreError("weights version " + std::to_string(version) + ": digest mismatch");
    }
    try {
      return deserialize_weights(bytes);
    } catch (const ModelError& err) {
      throw StoreError("weights version " + std::to_string(version) + ": " + err.what());
    }
  }
  throw StoreError("unknown weights version " + std::to_string(version));
}

}  // namespace ndt
