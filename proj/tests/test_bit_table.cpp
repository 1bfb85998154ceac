#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "facts/bit_table.hpp"

using namespace facts;

TEST_CASE("set and test track ones", "[bit_table]") {
  BitTable t(130);
  CHECK(t.size() == 130);
  CHECK(t.ones() == 0);
  t.set(0);
  t.set(64);
  t.set(129);
  CHECK(t.test(0));
  CHECK(t.test(64));
  CHECK(t.test(129));
  CHECK_FALSE(t.test(1));
  CHECK(t.ones() == 3);
  CHECK(t.popcount() == 3);
  CHECK_THROWS_AS(t.set(129), ContractError);  // one-bit-write: never touch a 1
  CHECK_THROWS_AS(t.set(130), ParameterError);
  CHECK_THROWS_AS(t.test(200), ParameterError);
  t.clear_all();
  CHECK(t.ones() == 0);
  CHECK_FALSE(t.test(0));
}

TEST_CASE("ones equals popcount under random fills", "[bit_table]") {
  std::mt19937_64 rng(42);
  BitTable t(1000);
  std::vector<std::uint64_t> order(1000);
  for (std::uint64_t i = 0; i < 1000; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::uint64_t i = 0; i < 600; ++i) {
    t.set(order[i]);
    REQUIRE(t.ones() == i + 1);  // m is monotone, +1 per write
  }
  CHECK(t.ones() == t.popcount());
}

TEST_CASE("snapshot serialization layout", "[bit_table]") {
  BitTable t(20);
  t.set(0);
  t.set(9);
  t.set(19);
  const Bytes snap = t.serialize();
  REQUIRE(snap.size() == 16 + 3);  // header + ceil(20/8)
  CHECK(get_u64le(snap.data()) == 20);
  CHECK(get_u64le(snap.data() + 8) == 3);
  CHECK(snap[16] == 0x01);  // bit 0 -> byte 0 LSB
  CHECK(snap[17] == 0x02);  // bit 9 -> byte 1 bit 1
  CHECK(snap[18] == 0x08);  // bit 19 -> byte 2 bit 3
  const BitTable back = BitTable::deserialize(ByteView{snap});
  CHECK(back.size() == 20);
  CHECK(back.ones() == 3);
  CHECK(back.test(0));
  CHECK(back.test(9));
  CHECK(back.test(19));
}

TEST_CASE("deserialize rejects corrupt snapshots", "[bit_table]") {
  BitTable t(20);
  t.set(3);
  Bytes snap = t.serialize();
  Bytes short_snap(snap.begin(), snap.begin() + 10);
  CHECK_THROWS_AS(BitTable::deserialize(ByteView{short_snap}), ParameterError);
  Bytes bad_m = snap;
  bad_m[8] = 9;  // m != popcount
  CHECK_THROWS_AS(BitTable::deserialize(ByteView{bad_m}), ParameterError);
  Bytes bad_pad = snap;
  bad_pad[18] = 0xF0;  // padding bits beyond s must be zero
  CHECK_THROWS_AS(BitTable::deserialize(ByteView{bad_pad}), ParameterError);
  Bytes bad_len = snap;
  bad_len.push_back(0);
  CHECK_THROWS_AS(BitTable::deserialize(ByteView{bad_len}), ParameterError);
}

TEST_CASE("serialize roundtrip property", "[bit_table]") {
  std::mt19937_64 rng(9);
  for (int iter = 0; iter < 20; ++iter) {
    const std::uint64_t s = 1 + rng() % 500;
    BitTable t(s);
    for (std::uint64_t i = 0; i < s; ++i)
      if (rng() & 1) t.set(i);
    const BitTable back = BitTable::deserialize(ByteView{t.serialize()});
    REQUIRE(back.size() == s);
    REQUIRE(back.ones() == t.ones());
    for (std::uint64_t i = 0; i < s; ++i) REQUIRE(back.test(i) == t.test(i));
  }
}

TEST_CASE("write guard is exclusive", "[bit_table]") {
  BitTable t(64);
  CHECK_FALSE(t.write_locked());
  {
    BitTable::WriteGuard g(t);
    CHECK(t.write_locked());
    CHECK_THROWS_AS(BitTable::WriteGuard(t), ContractError);
  }
  CHECK_FALSE(t.write_locked());
}
