#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "facts/wire.hpp"

using namespace facts;

TEST_CASE("hex roundtrip", "[common]") {
  Bytes b = {0x00, 0x1f, 0xab, 0xff};
  CHECK(to_hex(ByteView{b}) == "001fabff");
  CHECK(from_hex("001fabff") == b);
  CHECK(from_hex("001FABFF") == b);
  CHECK_THROWS_AS(from_hex("abc"), ParameterError);
  CHECK_THROWS_AS(from_hex("zz"), ParameterError);
}

TEST_CASE("endian helpers", "[common]") {
  Bytes b;
  put_u32be(b, 0x01020304u);
  REQUIRE(b == Bytes{0x01, 0x02, 0x03, 0x04});
  CHECK(get_u32be(b.data()) == 0x01020304u);
  b.clear();
  put_u64be(b, 0x0102030405060708ull);
  CHECK(get_u64be(b.data()) == 0x0102030405060708ull);
  b.clear();
  put_u64le(b, 0x0102030405060708ull);
  REQUIRE(b.size() == 8);
  CHECK(b[0] == 0x08);
  CHECK(get_u64le(b.data()) == 0x0102030405060708ull);
  b.clear();
  put_u16be(b, 0xbeef);
  CHECK(get_u16be(b.data()) == 0xbeef);
}

TEST_CASE("uniform_below stays in range and covers values", "[common]") {
  std::mt19937_64 rng(123);
  for (std::uint64_t bound : {1ull, 2ull, 3ull, 10ull, 64ull, 1000ull}) {
    std::vector<bool> seen(bound, false);
    for (int i = 0; i < 4000; ++i) {
      std::uint64_t v = uniform_below(rng, bound);
      REQUIRE(v < bound);
      seen[v] = true;
    }
    if (bound <= 64)
      for (std::uint64_t v = 0; v < bound; ++v) CHECK(seen[v]);
  }
  CHECK_THROWS_AS(uniform_below(rng, 0), ParameterError);
}

namespace {

/// In-memory Stream for codec tests.
class MemStream : public Stream {
 public:
  void read_exact(std::uint8_t* buf, std::size_t len) override {
    if (pos_ + len > data_.size()) throw StreamClosed("mem eof");
    std::copy_n(data_.begin() + pos_, len, buf);
    pos_ += len;
  }
  std::size_t read_some(std::uint8_t* buf, std::size_t len) override {
    if (pos_ >= data_.size()) throw StreamClosed("mem eof");
    std::size_t take = std::min(len, data_.size() - pos_);
    read_exact(buf, take);
    return take;
  }
  void write_all(const std::uint8_t* buf, std::size_t len) override {
    data_.insert(data_.end(), buf, buf + len);
  }
  void close() override {}
  Bytes data_;
  std::size_t pos_ = 0;
};

}  // namespace

TEST_CASE("frame codec roundtrip", "[wire]") {
  std::mt19937_64 rng(7);
  MemStream ms;
  std::vector<Frame> sent;
  for (int i = 0; i < 50; ++i) {
    Frame f;
    f.type = static_cast<MsgType>(1 + uniform_below(rng, 11));
    f.payload.resize(uniform_below(rng, 300));
    for (auto& b : f.payload) b = std::uint8_t(rng());
    write_frame(ms, f.type, ByteView{f.payload});
    sent.push_back(std::move(f));
  }
  for (const Frame& f : sent) {
    Frame got = read_frame(ms);
    CHECK(got.type == f.type);
    CHECK(got.payload == f.payload);
  }
}

TEST_CASE("frame length counts type byte plus payload", "[wire]") {
  MemStream ms;
  write_frame(ms, MsgType::OriginateReq, ByteView{Bytes{0xaa, 0xbb}});
  REQUIRE(ms.data_.size() == 4 + 1 + 2);
  CHECK(get_u32be(ms.data_.data()) == 3);
  CHECK(ms.data_[4] == 0x01);
}

TEST_CASE("hello codec", "[wire]") {
  MemStream ms;
  Bytes token(32, 0x11);
  write_hello(ms, "user-7", ByteView{token});
  REQUIRE(ms.data_.size() == kHelloSize);
  auto h = read_hello(ms);
  REQUIRE(h.has_value());
  CHECK(h->user_id == "user-7");
  CHECK(h->token_hash == sha3_256(ByteView{token}));

  // nonzero padding is rejected
  MemStream bad;
  write_hello(bad, "u", ByteView{token});
  bad.data_[10] = 0x55;
  CHECK_FALSE(read_hello(bad).has_value());

  CHECK_THROWS_AS(write_hello(ms, "", ByteView{token}), ParameterError);
  CHECK_THROWS_AS(write_hello(ms, std::string(33, 'x'), ByteView{token}), ParameterError);
}

TEST_CASE("epoch info codec roundtrip", "[wire]") {
  EpochInfo e;
  e.epoch_id = 3;
  e.params = {9600000, 47310, 741, 100000, 100, 10};
  e.quota_limit = 12;
  e.table_ones = 777;
  for (int i = 0; i < 32; ++i) {
    e.derive_key[i] = std::uint8_t(i);
    e.server_pubkey[i] = std::uint8_t(0xff - i);
  }
  const Bytes enc = encode_epoch_info(e);
  auto dec = decode_epoch_info(ByteView{enc});
  REQUIRE(dec.has_value());
  CHECK(dec->epoch_id == e.epoch_id);
  CHECK(dec->params == e.params);
  CHECK(dec->quota_limit == e.quota_limit);
  CHECK(dec->table_ones == e.table_ones);
  CHECK(dec->derive_key == e.derive_key);
  CHECK(dec->server_pubkey == e.server_pubkey);
  CHECK_FALSE(decode_epoch_info(ByteView{enc.data(), enc.size() - 1}).has_value());
}
