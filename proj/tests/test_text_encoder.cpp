#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "mrlf/errors.hpp"
#include "mrlf/rng.hpp"
#include "mrlf/text_encoder.hpp"
#include "oracles.hpp"

using namespace mrlf;

namespace {

PostRecord make_post(std::string text, std::vector<std::string> hashtags = {}) {
  PostRecord p;
  p.post_id = "p";
  p.text = std::move(text);
  p.hashtags = std::move(hashtags);
  p.location_id = 0;
  return p;
}

CharPipeParams make_char_pipe(int s, std::size_t e, std::size_t f, std::size_t a,
                              std::size_t hidden, Rng& rng) {
  CharPipeParams p;
  p.kernel_size = s;
  auto fill = [&rng](Shape shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-0.5, 0.5);
    return Tensor::param(shape, v);
  };
  p.conv_w = fill({f, e, static_cast<std::size_t>(s)});
  p.conv_b = fill({f});
  p.attn_wq = fill({f, a});
  p.attn_wk = fill({f, a});
  p.attn_wv = fill({f, a});
  p.ffn_w1 = fill({a, hidden});
  p.ffn_b1 = fill({hidden});
  p.ffn_w2 = fill({hidden, f});
  p.ffn_b2 = fill({f});
  return p;
}

}  // namespace

TEST_CASE("build_vocab applies the hashtag min count") {
  std::vector<PostRecord> posts;
  for (int i = 0; i < 60; ++i) posts.push_back(make_post("x", {"#a"}));
  for (int i = 0; i < 49; ++i) posts.push_back(make_post("x", {"#b"}));
  Vocabulary v = build_vocab(posts, 50);
  CHECK(v.hashtag_to_id.count("a") == 1);
  CHECK(v.hashtag_to_id.count("b") == 0);
  CHECK(v.hashtags.size() == 3);  // <pad>, <unk>, a

  Vocabulary v1 = build_vocab(posts, 1);
  CHECK(v1.hashtag_to_id.count("a") == 1);
  CHECK(v1.hashtag_to_id.count("b") == 1);
}

TEST_CASE("build_vocab enumerates distinct characters") {
  std::vector<PostRecord> posts = {make_post("ab"), make_post("ba")};
  Vocabulary v = build_vocab(posts, 50);
  CHECK(v.chars.size() == 4);  // <pad>, <unk>, a, b
  CHECK(v.char_to_id.at("<pad>") == kPadId);
  CHECK(v.char_to_id.at("<unk>") == kUnkId);
  CHECK(v.char_to_id.at("a") == 2);
  CHECK(v.char_to_id.at("b") == 3);
  CHECK_THROWS_AS(build_vocab(std::span<const PostRecord>{}, 50), ValidationError);
}

TEST_CASE("vocab threshold property on a random corpus") {
  Rng rng(3);
  std::vector<PostRecord> posts;
  for (int i = 0; i < 400; ++i) {
    std::vector<std::string> tags;
    tags.push_back("#t" + std::to_string(rng.uniform_index(30)));
    if (rng.bernoulli(0.4)) tags.push_back("#t" + std::to_string(rng.uniform_index(30)));
    posts.push_back(make_post("text", tags));
  }
  int min_count = 12;
  Vocabulary v = build_vocab(posts, min_count);
  std::unordered_map<std::string, int> counts;
  for (const auto& p : posts)
    for (const auto& t : p.hashtags) ++counts[t.substr(1)];
  for (std::size_t i = 2; i < v.hashtags.size(); ++i)
    CHECK(counts.at(v.hashtags[i]) >= min_count);
}

TEST_CASE("encode pads, truncates and lowercases") {
  std::vector<PostRecord> posts = {make_post("hi there", {"#Tag"})};
  Vocabulary v = build_vocab(posts, 1);

  EncodedPost e = encode(make_post(""), v, 100, 50);
  CHECK(e.text.char_ids.size() == 100);
  CHECK(std::all_of(e.text.char_ids.begin(), e.text.char_ids.end(),
                    [](int id) { return id == kPadId; }));

  // 'h' -> 2, 'i' -> 3 by first-appearance order
  EncodedPost e2 = encode(make_post("hi"), v, 100, 50);
  CHECK(e2.text.char_ids[0] == 2);
  CHECK(e2.text.char_ids[1] == 3);
  for (std::size_t i = 2; i < 100; ++i) CHECK(e2.text.char_ids[i] == kPadId);

  std::string longtext(150, 'h');
  EncodedPost e3 = encode(make_post(longtext), v, 100, 50);
  CHECK(e3.text.char_ids.size() == 100);
  CHECK(std::all_of(e3.text.char_ids.begin(), e3.text.char_ids.end(),
                    [](int id) { return id == 2; }));

  // uppercase text maps onto the lowercase vocabulary
  EncodedPost e4 = encode(make_post("HI"), v, 100, 50);
  CHECK(e4.text.char_ids[0] == 2);
  CHECK(e4.text.char_ids[1] == 3);

  // hashtags: '#' stripped, joined by a single space
  EncodedPost e5 = encode(make_post("", {"#Hi", "#hi"}), v, 100, 50);
  CHECK(e5.tags.char_ids[0] == 2);
  CHECK(e5.tags.char_ids[1] == 3);
  CHECK(e5.tags.char_ids[2] == v.char_to_id.at(" "));
  CHECK(e5.tags.char_ids[3] == 2);
  CHECK(e5.tags.char_ids[4] == 3);
  CHECK(e5.tags.word_ids[0] == kUnkId);  // "hi" never appeared as a hashtag
  EncodedPost e5b = encode(make_post("", {"#TAG"}), v, 100, 50);
  CHECK(e5b.tags.word_ids[0] == v.hashtag_to_id.at("tag"));

  // unseen characters and hashtags map to UNK
  EncodedPost e6 = encode(make_post("zz", {"#zz"}), v, 100, 50);
  CHECK(e6.text.char_ids[0] == kUnkId);
  CHECK(e6.tags.word_ids[0] == kUnkId);
}

TEST_CASE("encode is idempotent and stable under hashtag permutation") {
  std::vector<PostRecord> corpus = {make_post("some words here", {"#a", "#b", "#c"})};
  Vocabulary v = build_vocab(corpus, 1);
  PostRecord p = make_post("some words", {"#a", "#b"});
  EncodedPost a = encode(p, v, 32, 8);
  EncodedPost b = encode(p, v, 32, 8);
  CHECK(a.text.char_ids == b.text.char_ids);
  CHECK(a.text.word_ids == b.text.word_ids);
  CHECK(a.tags.char_ids == b.tags.char_ids);
  CHECK(a.tags.word_ids == b.tags.word_ids);

  PostRecord q = make_post("some words", {"#b", "#a"});
  EncodedPost c = encode(q, v, 32, 8);
  CHECK(c.tags.char_ids != a.tags.char_ids);  // order-concatenated
  std::vector<int> aw = a.tags.word_ids, cw = c.tags.word_ids;
  std::sort(aw.begin(), aw.end());
  std::sort(cw.begin(), cw.end());
  CHECK(aw == cw);
}

TEST_CASE("vocabulary JSON round trip preserves ids") {
  std::vector<PostRecord> posts = {make_post("hello world", {"#x", "#y"})};
  Vocabulary v = build_vocab(posts, 1);
  Vocabulary w = Vocabulary::from_json_string(v.to_json_string());
  CHECK(w.chars == v.chars);
  CHECK(w.words == v.words);
  CHECK(w.hashtags == v.hashtags);
  CHECK(w.min_count == v.min_count);
  CHECK(w.embed_dim == v.embed_dim);
  CHECK(w.char_to_id == v.char_to_id);
  CHECK_THROWS_AS(Vocabulary::from_json_string("{not json"), ValidationError);
  CHECK_THROWS_AS(Vocabulary::from_json_string("{\"chars\": []}"), ValidationError);
}

TEST_CASE("char_conv_pool output lengths follow the pooling formula") {
  CHECK(char_pool_length(100, 3) == 98);
  CHECK(char_pool_length(100, 4) == 49);
  CHECK(char_pool_length(100, 5) == 32);
  CHECK(char_pool_length(100, 6) == 24);

  Rng rng(7);
  std::size_t e = 6, f = 5;
  for (int s : {3, 4, 5, 6}) {
    CharPipeParams pipe = make_char_pipe(s, e, f, 8, 10, rng);
    std::vector<double> ev(100 * e);
    for (auto& x : ev) x = rng.uniform(-2, 2);
    Tensor h = char_conv_pool(Tensor::from({100, e}, ev), pipe);
    CHECK(h.shape() == Shape{char_pool_length(100, s), f});
  }
}

TEST_CASE("char_conv_pool is constant for constant rows and a center-tap kernel") {
  std::size_t e = 3, f = 3, len = 12;
  CharPipeParams pipe;
  pipe.kernel_size = 3;
  std::vector<double> kv(f * e * 3, 0.0);
  for (std::size_t j = 0; j < f; ++j) kv[(j * e + j) * 3 + 1] = 1.0;  // center tap, channel j
  pipe.conv_w = Tensor::from({f, e, 3}, kv);
  pipe.conv_b = Tensor::zeros({f});
  std::vector<double> ev;
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < e; ++j) ev.push_back(0.5 + static_cast<double>(j));
  Tensor h = char_conv_pool(Tensor::from({len, e}, ev), pipe);
  REQUIRE(h.shape()[1] == f);
  for (std::size_t r = 0; r < h.shape()[0]; ++r)
    for (std::size_t c = 0; c < f; ++c)
      CHECK(h.at2(r, c) == doctest::Approx(0.5 + static_cast<double>(c)).epsilon(1e-12));
}

TEST_CASE("multi-head self-attention degenerate cases") {
  Rng rng(9);
  std::size_t f = 6, a = 8;
  auto fill = [&rng](Shape shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-0.7, 0.7);
    return Tensor::from(shape, v);
  };
  Tensor wq = fill({f, a}), wk = fill({f, a}), wv = fill({f, a});

  SUBCASE("two identical rows give identical outputs (uniform weights)") {
    std::vector<double> row(f);
    for (auto& x : row) x = rng.uniform(-1, 1);
    std::vector<double> two = row;
    two.insert(two.end(), row.begin(), row.end());
    Tensor o = multi_head_self_attention(Tensor::from({2, f}, two), wq, wk, wv, 2);
    for (std::size_t c = 0; c < a; ++c)
      CHECK(o.at2(0, c) == doctest::Approx(o.at2(1, c)).epsilon(1e-12));
  }

  SUBCASE("singleton sequence returns its own value projection") {
    std::vector<double> row(f);
    for (auto& x : row) x = rng.uniform(-1, 1);
    Tensor h = Tensor::from({1, f}, row);
    Tensor o = multi_head_self_attention(h, wq, wk, wv, 2);
    Tensor v = matmul(h, wv);
    for (std::size_t c = 0; c < a; ++c)
      CHECK(o.at2(0, c) == doctest::Approx(v.at2(0, c)).epsilon(1e-12));
  }

  SUBCASE("matches the enumerated-weights oracle on random input") {
    for (int heads : {1, 2, 4}) {
      std::vector<double> hv(3 * f);
      for (auto& x : hv) x = rng.uniform(-1.5, 1.5);
      Tensor o = multi_head_self_attention(Tensor::from({3, f}, hv), wq, wk, wv, heads);
      auto want = oracle::multi_head_attention(hv, 3, f, wq.values(), wk.values(), wv.values(),
                                               a, static_cast<std::size_t>(heads));
      REQUIRE(o.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(o.values()[i] == doctest::Approx(want[i]).epsilon(1e-10));
    }
  }

  SUBCASE("head count must divide the attention dim") {
    Tensor h = fill({2, f});
    CHECK_THROWS_AS(multi_head_self_attention(h, wq, wk, wv, 3), std::invalid_argument);
  }
}

TEST_CASE("char_ffn_pool reductions") {
  Rng rng(15);
  std::size_t e = 4, f = 5, a = 6, hidden = 7;
  CharPipeParams pipe = make_char_pipe(3, e, f, a, hidden, rng);
  Rng unused(0);

  // dropout off (eval): all-zero rows reduce to the bias path
  Tensor zero = Tensor::zeros({4, a});
  Tensor fc = char_ffn_pool(zero, pipe, false, 0.5, unused);
  Tensor row = linear(relu(linear(Tensor::zeros({1, a}), pipe.ffn_w1, pipe.ffn_b1)),
                      pipe.ffn_w2, pipe.ffn_b2);
  REQUIRE(fc.shape() == Shape{f});
  for (std::size_t c = 0; c < f; ++c)
    CHECK(fc.values()[c] == doctest::Approx(row.at2(0, c)).epsilon(1e-12));

  // L = 1: pooling is the identity on the single FFN output
  std::vector<double> ov(a);
  for (auto& x : ov) x = rng.uniform(-1, 1);
  Tensor single = Tensor::from({1, a}, ov);
  Tensor fc1 = char_ffn_pool(single, pipe, false, 0.5, unused);
  Tensor want1 = linear(relu(linear(single, pipe.ffn_w1, pipe.ffn_b1)), pipe.ffn_w2, pipe.ffn_b2);
  for (std::size_t c = 0; c < f; ++c)
    CHECK(fc1.values()[c] == doctest::Approx(want1.at2(0, c)).epsilon(1e-12));

  // identical rows pool to any row's FFN output
  std::vector<double> three;
  for (int r = 0; r < 3; ++r) three.insert(three.end(), ov.begin(), ov.end());
  Tensor fc3 = char_ffn_pool(Tensor::from({3, a}, three), pipe, false, 0.5, unused);
  for (std::size_t c = 0; c < f; ++c)
    CHECK(fc3.values()[c] == doctest::Approx(want1.at2(0, c)).epsilon(1e-12));
}

TEST_CASE("word_branch properties") {
  std::size_t e = 4, f = 4, words = 6;

  SUBCASE("all-PAD input with zero embeddings gives relu'd biases") {
    WordBranchParams params;
    Rng rng(21);
    for (int s : {1, 2}) {
      WordPipeParams pipe;
      pipe.kernel_size = s;
      std::vector<double> kv(f * e * static_cast<std::size_t>(s));
      for (auto& x : kv) x = rng.uniform(-1, 1);
      pipe.conv_w = Tensor::from({f, e, static_cast<std::size_t>(s)}, kv);
      std::vector<double> bv(f);
      for (auto& x : bv) x = rng.uniform(-1, 1);
      pipe.conv_b = Tensor::from({f}, bv);
      params.pipes.push_back(pipe);
    }
    Tensor out = word_branch(Tensor::zeros({words, e}), params);
    REQUIRE(out.shape() == Shape{2 * f});
    for (std::size_t p = 0; p < 2; ++p)
      for (std::size_t j = 0; j < f; ++j)
        CHECK(out.values()[p * f + j] ==
              doctest::Approx(std::max(0.0, params.pipes[p].conv_b.values()[j])).epsilon(1e-12));
  }

  SUBCASE("size-1 identity filters reproduce the column-wise max") {
    WordBranchParams params;
    WordPipeParams pipe;
    pipe.kernel_size = 1;
    std::vector<double> kv(e * e * 1, 0.0);
    for (std::size_t j = 0; j < e; ++j) kv[j * e + j] = 1.0;
    pipe.conv_w = Tensor::from({e, e, 1}, kv);
    pipe.conv_b = Tensor::zeros({e});
    params.pipes.push_back(pipe);

    Rng rng(22);
    std::vector<double> ev(words * e);
    for (auto& x : ev) x = rng.uniform(0.1, 2.0);  // positive: relu is transparent
    Tensor embeds = Tensor::from({words, e}, ev);
    Tensor out = word_branch(embeds, params);
    for (std::size_t j = 0; j < e; ++j) {
      double want = 0.0;
      for (std::size_t w = 0; w < words; ++w) want = std::max(want, ev[w * e + j]);
      CHECK(out.values()[j] == doctest::Approx(want).epsilon(1e-12));
    }

    // global max pooling is invariant to permuting positions for size 1
    std::vector<double> perm(ev);
    for (std::size_t w = 0; w < words / 2; ++w)
      for (std::size_t j = 0; j < e; ++j)
        std::swap(perm[w * e + j], perm[(words - 1 - w) * e + j]);
    Tensor out2 = word_branch(Tensor::from({words, e}, perm), params);
    for (std::size_t j = 0; j < e; ++j)
      CHECK(out2.values()[j] == doctest::Approx(out.values()[j]).epsilon(1e-12));
  }

  SUBCASE("doubling embeddings doubles the zero-bias size-1 branch") {
    WordBranchParams params;
    WordPipeParams pipe;
    pipe.kernel_size = 1;
    Rng rng(23);
    std::vector<double> kv(f * e);
    for (auto& x : kv) x = rng.uniform(-1, 1);
    pipe.conv_w = Tensor::from({f, e, 1}, kv);
    pipe.conv_b = Tensor::zeros({f});
    params.pipes.push_back(pipe);

    std::vector<double> ev(words * e);
    for (auto& x : ev) x = rng.uniform(-1, 1);
    std::vector<double> ev2(ev);
    for (auto& x : ev2) x *= 2.0;
    Tensor out = word_branch(Tensor::from({words, e}, ev), params);
    Tensor out2 = word_branch(Tensor::from({words, e}, ev2), params);
    for (std::size_t j = 0; j < f; ++j)
      CHECK(out2.values()[j] == doctest::Approx(2.0 * out.values()[j]).epsilon(1e-10));
  }
}

TEST_CASE("char branch end-to-end gradient vs finite differences") {
  Rng rng(33);
  std::size_t e = 4, f = 4, a = 4, hidden = 5, len = 10;
  CharBranchParams branch;
  branch.heads = 2;
  branch.pipes.push_back(make_char_pipe(3, e, f, a, hidden, rng));
  branch.pipes.push_back(make_char_pipe(4, e, f, a, hidden, rng));

  oracle::GradCheck gc;
  Tensor embeds = Tensor::param({len, e}, oracle::well_separated(rng, len * e, -2, 2, 0.005));
  gc.add(embeds);
  for (auto& pipe : branch.pipes) {
    gc.add(pipe.conv_w);
    gc.add(pipe.conv_b);
    gc.add(pipe.attn_wq);
    gc.add(pipe.attn_wk);
    gc.add(pipe.attn_wv);
    gc.add(pipe.ffn_w1);
    gc.add(pipe.ffn_b1);
    gc.add(pipe.ffn_w2);
    gc.add(pipe.ffn_b2);
  }
  double err = gc.max_rel_err([&]() {
    Rng drop_rng(555);
    CharBranchOut out = char_branch(embeds, branch, true, 0.3, drop_rng);
    return sum(out.feature);
  });
  CHECK(err < 1e-4);
}
