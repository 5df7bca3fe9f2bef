#include <doctest.h>

#include <fstream>

#include "fixtures.hpp"
#include "ndt/datastore.hpp"

using namespace ndt;

namespace {

LabeledRecord random_record(std::mt19937_64& rng, int id) {
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  LabeledRecord r;
  r.traffic.flow_id = id;
  r.traffic.timestamp_s = id * 0.2;
  for (double& v : r.traffic.x) v = u(rng);
  const int hops = 1 + id % 4;
  for (int h = 0; h < hops; ++h) {
    r.traffic.path.push_back(static_cast<int>(rng() % 12));
    r.link_context.push_back({u(rng), u(rng)});
  }
  r.traffic.origin = id % 8;
  r.traffic.destination = (id + 3) % 8;
  r.y = std::abs(u(rng)) * 1e-9;
  r.snapshot = id / 10;
  r.phase = id % 4;
  return r;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("sha256 known answer") {
  CHECK(sha256_hex(std::string("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("labeled and traffic records round-trip") {
  fx::TempDir dir("store");
  std::mt19937_64 rng(5);
  std::vector<LabeledRecord> recs;
  {
    LabeledStore labeled(dir.path / "labeled.jsonl");
    TrafficStore traffic(dir.path / "traffic.jsonl");
    for (int i = 0; i < 100; ++i) {
      recs.push_back(random_record(rng, i));
      labeled.append(recs.back());
      traffic.append(recs.back().traffic);
    }
  }
  LabeledStore labeled(dir.path / "labeled.jsonl");
  const auto all = labeled.scan();
  CHECK(all.corrupt.empty());
  CHECK(all.records == recs);

  const auto t = TrafficStore(dir.path / "traffic.jsonl").scan({2.0, 4.0});
  REQUIRE(t.records.size() == 10);
  CHECK(t.records.front() == recs[10].traffic);

  CHECK(labeled.scan({5.0, 5.0}).records.empty());
  CHECK(read_lines(dir.path / "labeled.jsonl").front().find("ndt.labeled") != std::string::npos);
}

TEST_CASE("examples convert through records") {
  const auto g = load_topology(fx::synthetic8());
  const auto ex = fx::labeled(g, 4.0, 5.0, 9);
  for (const auto& e : ex) {
    const auto back = to_example(to_labeled_record(e));
    CHECK(back.x_f == e.x_f);
    CHECK(back.path == e.path);
    CHECK(back.link_context == e.link_context);
    CHECK(back.y == e.y);
    CHECK(back.flow.start_s == e.flow.start_s);
    CHECK(to_traffic_record(e).timestamp_s == e.flow.start_s);
  }
}

TEST_CASE("corrupt records are skipped and reported") {
  fx::TempDir dir("corrupt");
  std::mt19937_64 rng(1);
  {
    LabeledStore s(dir.path / "l.jsonl");
    for (int i = 0; i < 5; ++i) s.append(random_record(rng, i));
  }
  auto lines = read_lines(dir.path / "l.jsonl");
  REQUIRE(lines.size() == 6);
  // Tamper with a value, and break another line's syntax.
  const auto pos = lines[2].find("\"phase\":1");
  REQUIRE(pos != std::string::npos);
  lines[2].replace(pos, 9, "\"phase\":2");
  lines[4] = lines[4].substr(0, lines[4].size() / 2);
  write_lines(dir.path / "l.jsonl", lines);
  {
    std::ofstream tail(dir.path / "l.jsonl", std::ios::app);
    tail << "{\"partial\":";
  }
  const auto r = LabeledStore(dir.path / "l.jsonl").scan();
  CHECK(r.records.size() == 3);
  REQUIRE(r.corrupt.size() == 3);
  CHECK(r.corrupt[0].line == 3);
  CHECK(r.corrupt[0].reason == "digest mismatch");
  CHECK(r.corrupt[1].line == 5);
  CHECK(r.corrupt[2].line == 7);
}

TEST_CASE("wrong schema header is rejected") {
  fx::TempDir dir("schema");
  { TrafficStore t(dir.path / "t.jsonl"); }
  CHECK_THROWS_AS(LabeledStore(dir.path / "t.jsonl"), StoreError);
}

TEST_CASE("weights archive") {
  fx::TempDir dir("weights");
  WeightsStore store(dir.path);
  Rng rng(2);
  auto w = init_weights(rng);
  w.version = 1;
  store.save_weights(w, 0.5);
  CHECK(store.contains(1));
  CHECK(!store.contains(2));
  CHECK_THROWS_AS(store.save_weights(w, 1.0), StoreError);
  CHECK(store.load_weights(1) == w);
  CHECK_THROWS_AS(store.load_weights(7), StoreError);

  const auto g = load_topology(fx::synthetic8());
  const auto ex = fx::labeled(g, 4.0, 5.0, 3);
  const auto hg = build_hypergraph(std::span<const LabeledExample>(ex));
  CHECK(predict_delay(hg, store.load_weights(1)) == predict_delay(hg, w));

  const auto entries = store.entries();
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].timestamp_s == 0.5);
  {
    std::fstream f(dir.path / entries[0].file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(store.load_weights(1), StoreError);
}
