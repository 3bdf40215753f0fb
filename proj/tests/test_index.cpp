#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "msh/index.hpp"
#include "msh/rng.hpp"
#include "oracles.hpp"

using namespace msh;

namespace {

Bitcode random_code(std::uint32_t n_bits, Rng& rng) {
  Bitcode c(n_bits);
  for (std::uint32_t b = 0; b < n_bits; ++b) c.set_bit(b, rng.next_u64() & 1);
  return c;
}

std::vector<FeatureSequence> small_database(int n_videos, int n_f, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_classes = 4;
  spec.videos_per_class = (n_videos + 3) / 4;
  spec.n_f = n_f;
  spec.min_len = 4;
  spec.max_len = 12;
  spec.seed = seed;
  SyntheticGenerator gen(spec);
  std::vector<FeatureSequence> out;
  for (int v = 0; v < n_videos; ++v) {
    FeatureSequence s = gen.make_video(v % 4, v / 4);
    s.video_id = 1000 + v;  // ids distinct from entry indices on purpose
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("bit packing round-trips and keeps padding clean") {
  Rng rng(1);
  for (std::uint32_t n_bits : {1u, 7u, 64u, 65u, 96u, 128u, 192u, 256u, 300u}) {
    std::vector<double> signs(n_bits);
    for (auto& s : signs) s = (rng.next_u64() & 1) ? 1.0 : -1.0;
    const Bitcode code = Bitcode::from_signs(signs);
    CHECK(code.n_bits() == n_bits);
    CHECK(code.to_signs() == signs);
    // Bits beyond n_bits stay zero.
    const std::size_t tail = n_bits % 64;
    if (tail != 0) {
      const std::uint64_t padding = code.words()[code.n_words() - 1] >> tail;
      CHECK(padding == 0);
    }
  }
}

TEST_CASE("hamming distance basics and oracle equivalence") {
  Rng rng(2);
  const Bitcode a = random_code(96, rng);
  CHECK(hamming(a, a) == 0);

  Bitcode x(4), y(4);
  // 1010 vs 0110 differ in the first two positions.
  x.set_bit(0, true);
  x.set_bit(2, true);
  y.set_bit(1, true);
  y.set_bit(2, true);
  CHECK(hamming(x, y) == 2);

  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint32_t n_bits = 1 + static_cast<std::uint32_t>(rng.below(257));
    const Bitcode p = random_code(n_bits, rng);
    const Bitcode q = random_code(n_bits, rng);
    CHECK(hamming(p, q) == oracles::hamming_bit_loop(p, q));
  }

  CHECK_THROWS_AS(hamming(Bitcode(8), Bitcode(16)), ShapeError);
}

TEST_CASE("hamming is a metric on fixed-width codes") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint32_t n_bits = 1 + static_cast<std::uint32_t>(rng.below(130));
    const Bitcode a = random_code(n_bits, rng);
    const Bitcode b = random_code(n_bits, rng);
    const Bitcode c = random_code(n_bits, rng);
    CHECK(hamming(a, b) == hamming(b, a));
    CHECK((hamming(a, b) == 0) == (a == b));
    CHECK(hamming(a, c) <= hamming(a, b) + hamming(b, c));
  }
}

TEST_CASE("search returns the full ranking when k covers the codebook") {
  Rng rng(4);
  Codebook cb(32);
  for (int i = 0; i < 20; ++i) cb.add(i, 1.0f, random_code(32, rng));
  const Bitcode q = random_code(32, rng);
  const RetrievalResult r = search(cb, q, 100);
  CHECK(r.items.size() == 20);
  for (std::size_t i = 1; i < r.items.size(); ++i) {
    CHECK(r.items[i - 1].distance <= r.items[i].distance);
  }
}

TEST_CASE("an exact match ranks first at distance zero") {
  Rng rng(5);
  Codebook cb(64);
  for (int i = 0; i < 50; ++i) cb.add(i, 1.0f, random_code(64, rng));
  const Bitcode q = cb.code(17);
  const RetrievalResult r = search(cb, q, 5);
  REQUIRE(!r.items.empty());
  CHECK(r.items[0].video_id == 17);
  CHECK(r.items[0].distance == 0);
}

TEST_CASE("search matches the full-sort oracle on 500 random entries") {
  Rng rng(6);
  Codebook cb(96);
  for (int i = 0; i < 500; ++i) cb.add(i, 1.0f, random_code(96, rng));
  for (int trial = 0; trial < 20; ++trial) {
    const Bitcode q = random_code(96, rng);
    const RetrievalResult fast = search(cb, q, 20);
    const auto slow = oracles::search_full_sort(cb, q, 20);
    REQUIRE(fast.items.size() == slow.size());
    for (std::size_t i = 0; i < slow.size(); ++i) {
      CHECK(fast.items[i].entry_id == slow[i].entry_id);
      CHECK(fast.items[i].distance == slow[i].distance);
    }
  }
}

TEST_CASE("ties break toward the smaller entry id") {
  Codebook cb(8);
  Rng rng(7);
  const Bitcode same = random_code(8, rng);  // one shared code
  for (int i = 0; i < 5; ++i) cb.add(100 + i, 1.0f, same);
  const RetrievalResult r = search(cb, same, 3);
  REQUIRE(r.items.size() == 3);
  CHECK(r.items[0].entry_id == 0);
  CHECK(r.items[1].entry_id == 1);
  CHECK(r.items[2].entry_id == 2);
}

TEST_CASE("search validates widths and k") {
  Codebook cb(16);
  Rng rng(8);
  cb.add(0, 1.0f, random_code(16, rng));
  CHECK_THROWS_AS(search(cb, random_code(32, rng), 5), ShapeError);
  CHECK_THROWS_AS(search(cb, random_code(16, rng), 0), ConfigError);
}

TEST_CASE("purging keeps the best entry per video and preserves order") {
  RetrievalResult r;
  r.items = {
      ResultItem{1, 1.0f, 0, 0},
      ResultItem{2, 0.5f, 1, 1},
      ResultItem{1, 0.5f, 2, 2},
  };
  const RetrievalResult purged = purge_duplicates(r);
  REQUIRE(purged.items.size() == 2);
  CHECK(purged.items[0].video_id == 1);
  CHECK(purged.items[0].distance == 0);
  CHECK(purged.items[1].video_id == 2);

  // No duplicates: identity. Purging twice changes nothing.
  const RetrievalResult again = purge_duplicates(purged);
  REQUIRE(again.items.size() == purged.items.size());
  for (std::size_t i = 0; i < again.items.size(); ++i) {
    CHECK(again.items[i].entry_id == purged.items[i].entry_id);
  }
}

TEST_CASE("purging a ranked list matches the group-by-min oracle") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Codebook cb(32);
    const std::size_t n_videos = 10;
    const std::vector<double> alphas = {0.25, 0.5, 0.75, 1.0};
    for (std::size_t v = 0; v < n_videos; ++v) {
      for (double a : alphas) cb.add(v, static_cast<float>(a), random_code(32, rng));
    }
    const Bitcode q = random_code(32, rng);
    const RetrievalResult full = search(cb, q, cb.size());
    const RetrievalResult purged = purge_duplicates(full);
    const auto expected = oracles::purge_group_by_min(full.items);
    REQUIRE(purged.items.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(purged.items[i].entry_id == expected[i].entry_id);
    }
  }
}

TEST_CASE("codebook construction: plain and duplicated") {
  EncoderModel enc;
  enc.init(16, 8, 10);
  const auto database = small_database(12, 8, 11);
  const std::vector<double> grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  const Codebook plain = build_codebook(enc, database, CodebookMode::kPlain);
  CHECK(plain.size() == 12);
  CHECK(plain.n_alphas() == 1);

  const Codebook dup = build_codebook(enc, database, CodebookMode::kDuplicated, grid);
  CHECK(dup.size() == 120);  // multiplied by the grid size
  CHECK(dup.n_alphas() == 10);

  {
    // Storage grows by the same factor (up to the fixed header).
    namespace fs = std::filesystem;
    const std::string p_plain = (fs::temp_directory_path() / "msh_cb_plain.mshc").string();
    const std::string p_dup = (fs::temp_directory_path() / "msh_cb_dup.mshc").string();
    plain.save(p_plain);
    dup.save(p_dup);
    CHECK(fs::file_size(p_dup) >= 10 * (fs::file_size(p_plain) - 20));
    std::remove(p_plain.c_str());
    std::remove(p_dup.c_str());
  }

  // The alpha = 1.0 duplicate equals the plain entry for the same video.
  std::map<std::uint64_t, Bitcode> plain_codes;
  for (std::size_t i = 0; i < plain.size(); ++i) {
    plain_codes.emplace(plain.video_id(i), plain.code(i));
  }
  std::size_t checked = 0;
  for (std::size_t i = 0; i < dup.size(); ++i) {
    if (dup.alpha(i) == 1.0f) {
      CHECK(dup.code(i) == plain_codes.at(dup.video_id(i)));
      ++checked;
    }
  }
  CHECK(checked == 12);

  CHECK_THROWS_AS(build_codebook(enc, {}, CodebookMode::kPlain), ConfigError);
  CHECK_THROWS_AS(build_codebook(enc, database, CodebookMode::kDuplicated, {}), ConfigError);
}

TEST_CASE("codebook files round-trip") {
  Rng rng(12);
  Codebook cb(96);
  for (int i = 0; i < 37; ++i) {
    cb.add(500 + i, 0.1f * static_cast<float>(1 + i % 10), random_code(96, rng));
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "msh_codebook_rt.bin").string();
  cb.save(path);
  const Codebook loaded = Codebook::load(path);
  REQUIRE(loaded.size() == cb.size());
  CHECK(loaded.n_bits() == cb.n_bits());
  for (std::size_t i = 0; i < cb.size(); ++i) {
    CHECK(loaded.entry_id(i) == cb.entry_id(i));
    CHECK(loaded.video_id(i) == cb.video_id(i));
    CHECK(loaded.alpha(i) == cb.alpha(i));
    CHECK(loaded.code(i) == cb.code(i));
  }
  // Duplicated storage is proportionally larger than plain storage.
  Codebook plain(96);
  for (int i = 0; i < 37; ++i) plain.add(500 + i, 1.0f, cb.code(i));
  const std::string plain_path = path + ".plain";
  plain.save(plain_path);
  CHECK(std::filesystem::file_size(path) >= std::filesystem::file_size(plain_path));

  std::ofstream(path, std::ios::binary | std::ios::trunc) << "not a codebook";
  CHECK_THROWS_AS(Codebook::load(path), FormatError);
  std::remove(path.c_str());
  std::remove(plain_path.c_str());
}

TEST_CASE("stream sessions match the batch encode-then-search path") {
  EncoderModel enc;
  enc.init(16, 8, 13);
  const auto database = small_database(10, 8, 14);
  const Codebook cb = build_codebook(enc, database, CodebookMode::kPlain);

  const auto probe = small_database(2, 8, 15);
  StreamSession session(enc);
  for (std::size_t t = 0; t < probe[0].length(); ++t) {
    const Bitcode code = session.push(probe[0].clips.row(t), probe[0].dim());

    // Batch path on the same prefix.
    Matrix prefix(t + 1, probe[0].dim());
    for (std::size_t r = 0; r <= t; ++r) {
      for (std::size_t c = 0; c < probe[0].dim(); ++c) prefix(r, c) = probe[0].clips(r, c);
    }
    const EncodeResult batch = encode_sequence(enc, prefix);
    CHECK(code == batch.final);

    const RetrievalResult via_session = session.query(cb, 5);
    const RetrievalResult via_batch = search(cb, batch.final, 5);
    REQUIRE(via_session.items.size() == via_batch.items.size());
    for (std::size_t i = 0; i < via_batch.items.size(); ++i) {
      CHECK(via_session.items[i].entry_id == via_batch.items[i].entry_id);
      CHECK(via_session.items[i].distance == via_batch.items[i].distance);
    }
  }
}

TEST_CASE("sessions are isolated and queries are repeatable") {
  EncoderModel enc;
  enc.init(16, 8, 16);
  const auto database = small_database(8, 8, 17);
  const Codebook cb = build_codebook(enc, database, CodebookMode::kPlain);
  const auto probes = small_database(2, 8, 18);

  // Solo run of probe 0 for reference.
  std::vector<Bitcode> solo;
  {
    StreamSession s(enc);
    for (std::size_t t = 0; t < probes[0].length(); ++t) {
      solo.push_back(s.push(probes[0].clips.row(t), probes[0].dim()));
    }
  }

  StreamSession a(enc), b(enc);
  CHECK(a.session_id() != b.session_id());
  CHECK_THROWS_AS(a.query(cb, 3), StateError);  // query before the first push

  const std::size_t steps = std::min(probes[0].length(), probes[1].length());
  for (std::size_t t = 0; t < steps; ++t) {
    const Bitcode ca = a.push(probes[0].clips.row(t), probes[0].dim());
    b.push(probes[1].clips.row(t), probes[1].dim());
    CHECK(ca == solo[t]);  // interleaving another session changes nothing

    const RetrievalResult q1 = a.query(cb, 4);
    const RetrievalResult q2 = a.query(cb, 4);  // no push in between
    REQUIRE(q1.items.size() == q2.items.size());
    for (std::size_t i = 0; i < q1.items.size(); ++i) {
      CHECK(q1.items[i].entry_id == q2.items[i].entry_id);
    }
  }
  CHECK(a.clips_consumed() == steps);
}

TEST_CASE("bench_search reports sane fields") {
  const Codebook cb = random_codebook(2000, 64, 19);
  const BenchReport r = bench_search(cb, 50, 10, 20);
  CHECK(r.n_entries == 2000);
  CHECK(r.n_bits == 64);
  CHECK(r.n_queries == 50);
  CHECK(r.k == 10);
  CHECK(r.median_us >= 0.0);
  CHECK(r.p99_us >= r.median_us);
  CHECK(r.mean_us > 0.0);
  CHECK(r.distance_evals_per_query == 2000);
}

TEST_CASE("k does not change the number of distance computations") {
  const Codebook cb = random_codebook(1000, 32, 21);
  Rng rng(22);
  const Bitcode q = random_code(32, rng);
  SearchStats s1, s20, s500;
  search(cb, q, 1, &s1);
  search(cb, q, 20, &s20);
  search(cb, q, 500, &s500);
  CHECK(s1.distance_evals == 1000);
  CHECK(s20.distance_evals == 1000);
  CHECK(s500.distance_evals == 1000);
}
