// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// Writes a deterministic English-like toy corpus (one sentence per line,
// lowercase, whitespace tokenized) as train.txt / valid.txt / test.txt.
// Paragraphs share a topic and a tense, so the text carries both local
// syntax and longer-range dependencies for a recurrent model to learn.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "dkp/rng.hpp"

namespace {

using Words = std::vector<std::string>;

struct Verb {
  std::string base, third, past;
};

struct Topic {
  Words nouns;
  Words adjectives;
  std::vector<Verb> verbs;
  Words places;
};

std::vector<Verb> verbs(const Words& forms) {
  // "walk" or "go:goes:went"
  std::vector<Verb> out;
  for (const auto& s : forms) {
    const auto a = s.find(':');
    if (a == std::string::npos) {
      Verb v{s, s + "s", s.back() == 'e' ? s + "d" : s + "ed"};
      if (s.back() == 'y' && std::string("aeiou").find(s[s.size() - 2]) ==
                                 std::string::npos) {
        v.third = s.substr(0, s.size() - 1) + "ies";
        v.past = s.substr(0, s.size() - 1) + "ied";
      }
      if (s.back() == 'h' || s.back() == 's') v.third = s + "es";
      out.push_back(v);
    } else {
      const auto b = s.find(':', a + 1);
      out.push_back({s.substr(0, a), s.substr(a + 1, b - a - 1), s.substr(b + 1)});
    }
  }
  return out;
}

std::string plural(const std::string& n) {
  if (n == "man") return "men";
  if (n == "woman") return "women";
  if (n == "child") return "children";
  if (n.back() == 'y' && n.size() > 1 && n[n.size() - 2] != 'a' &&
      n[n.size() - 2] != 'e' && n[n.size() - 2] != 'o')
    return n.substr(0, n.size() - 1) + "ies";
  if (n.back() == 's' || n.back() == 'h' || n.back() == 'x') return n + "es";
  return n + "s";
}

std::vector<Topic> topics() {
  return {
      {{"ship", "sailor", "captain", "wave", "harbor", "island", "storm",
        "boat", "fish", "net", "shore", "anchor", "deck", "wind", "tide",
        "gull", "rope", "sail", "crew", "lighthouse"},
       {"salty", "rough", "calm", "grey", "distant", "wet", "deep", "wild",
        "old", "cold"},
       verbs({"sail", "row", "drift", "anchor", "fish", "watch", "pull",
              "steer", "reach", "leave:leaves:left", "see:sees:saw",
              "throw:throws:threw"}),
       {"harbor", "sea", "bay", "coast", "island"}},
      {{"farmer", "field", "horse", "barn", "cow", "wheat", "plough", "sheep",
        "orchard", "apple", "fence", "goat", "hay", "pig", "garden", "seed",
        "cart", "hen", "meadow", "well"},
       {"green", "golden", "muddy", "quiet", "ripe", "dry", "broad", "small",
        "fat", "early"},
       verbs({"plant", "harvest", "feed:feeds:fed", "milk", "plough", "gather", "carry",
              "water", "mend", "grow:grows:grew", "sell:sells:sold",
              "dig:digs:dug"}),
       {"village", "valley", "farm", "hill", "field"}},
      {{"merchant", "street", "market", "clerk", "coin", "shop", "bank",
        "carriage", "lamp", "crowd", "bridge", "tower", "letter", "paper",
        "price", "banker", "tailor", "thief", "window", "square"},
       {"busy", "narrow", "crowded", "rich", "poor", "dark", "new", "noisy",
        "tall", "clever"},
       verbs({"trade", "count", "borrow", "lend:lends:lent", "pay:pays:paid",
              "walk", "open", "close", "cross", "buy:buys:bought",
              "steal:steals:stole", "write:writes:wrote"}),
       {"city", "town", "market", "street", "square"}},
      {{"soldier", "king", "army", "sword", "castle", "wall", "general",
        "enemy", "gate", "battle", "banner", "knight", "shield", "spear",
        "camp", "guard", "horn", "fort", "queen", "prisoner"},
       {"brave", "proud", "bloody", "fierce", "loyal", "weary", "strong",
        "ancient", "cruel", "silent"},
       verbs({"attack", "defend", "march", "guard", "order", "capture",
              "burn", "surrender", "call", "fight:fights:fought",
              "lead:leads:led", "win:wins:won"}),
       {"castle", "border", "north", "kingdom", "plain"}},
      {{"doctor", "student", "book", "lamp", "experiment", "engine", "star",
        "glass", "measure", "theory", "professor", "machine", "number",
        "lesson", "map", "clock", "school", "wire", "metal", "light"},
       {"careful", "bright", "strange", "exact", "modern", "heavy", "simple",
        "famous", "curious", "small"},
       verbs({"study", "measure", "test", "explain", "observe", "record",
              "learn", "discover", "repair", "read:reads:read",
              "think:thinks:thought", "teach:teaches:taught"}),
       {"school", "laboratory", "library", "college", "observatory"}},
      {{"mother", "child", "father", "kitchen", "bread", "table", "door",
        "fire", "cup", "dog", "cat", "bed", "chair", "sister", "brother",
        "kettle", "supper", "candle", "room", "blanket"},
       {"warm", "happy", "tired", "little", "kind", "sleepy", "clean",
        "young", "gentle", "hungry"},
       verbs({"cook", "clean", "wash", "call", "help", "play", "laugh",
              "bake", "wait", "eat:eats:ate", "sleep:sleeps:slept",
              "make:makes:made"}),
       {"house", "home", "kitchen", "cottage", "room"}},
  };
}

const Words kNames = {"john", "mary", "thomas", "anne", "william", "sarah",
                      "james", "elizabeth", "henry", "jane", "robert", "emma"};
const Words kAdverbs = {"slowly", "quickly", "again", "often", "never",
                        "always", "carefully", "early", "late", "together"};
const Words kPreps = {"in", "near", "by", "behind", "across", "from", "under",
                      "beside"};
const Words kTime = {"that morning", "at night", "in the spring",
                     "after the storm", "before dawn", "every day",
                     "in the evening", "that year"};

class Generator {
 public:
  Generator(std::uint64_t seed, std::size_t n_phrases)
      : rng_(seed), topics_(topics()) {
    // Set phrases ("under the old bridge of the king") drawn from a shared
    // pool, so their continuations depend on several preceding words.
    Words adjs, nouns;
    for (const auto& t : topics_) {
      adjs.insert(adjs.end(), t.adjectives.begin(), t.adjectives.end());
      nouns.insert(nouns.end(), t.nouns.begin(), t.nouns.end());
    }
    std::set<std::string> seen;
    while (phrases_.size() < n_phrases) {
      std::string p = kPreps[rng_.below(kPreps.size())] + " the " +
                      adjs[rng_.below(adjs.size())] + " " +
                      nouns[rng_.below(nouns.size())];
      if (rng_.bernoulli(0.5)) p += " of the " + nouns[rng_.below(nouns.size())];
      if (seen.insert(p).second) phrases_.push_back(p);
    }
  }

  std::vector<std::string> paragraph() {
    topic_ = &topics_[rng_.below(topics_.size())];
    past_ = rng_.bernoulli(0.6);
    hero_ = kNames[zipf(kNames.size())];
    // A small cast of adjective-noun bindings that recur in the paragraph.
    cast_.clear();
    while (cast_.size() < 3) {
      const auto& a = topic_->adjectives[rng_.below(topic_->adjectives.size())];
      const auto& n = topic_->nouns[rng_.below(topic_->nouns.size())];
      bool clash = false;
      for (const auto& [ca, cn] : cast_) clash |= ca == a || cn == n;
      if (!clash) cast_.emplace_back(a, n);
    }
    const std::size_t n = 3 + rng_.below(6);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(sentence());
    return out;
  }

 private:
  // Zipf-like rank over [0, n).
  std::size_t zipf(std::size_t n) {
    const double u = rng_.uniform();
    const auto k = static_cast<std::size_t>(std::pow(n + 1.0, u)) - 1;
    return std::min(k, n - 1);
  }
  template <typename T>
  const T& pick(const std::vector<T>& v) { return v[zipf(v.size())]; }

  // Returns the phrase and whether it is grammatically plural.
  std::pair<std::string, bool> noun_phrase(bool subject) {
    const double r = rng_.uniform();
    if (subject && r < 0.2) return {hero_, false};
    if (subject && r < 0.3) return {rng_.bernoulli(0.5) ? "he" : "she", false};
    if (subject && r < 0.35) return {"they", true};
    if (rng_.bernoulli(0.55)) {
      const auto& [a, n] = cast_[rng_.below(cast_.size())];
      return {"the " + a + " " + n, false};
    }
    const bool pl = rng_.bernoulli(0.3);
    std::string np;
    if (pl)
      np = rng_.bernoulli(0.5) ? "the" : (rng_.bernoulli(0.5) ? "some" : "N");
    else
      np = rng_.bernoulli(0.7) ? "the" : "a";
    if (rng_.bernoulli(0.4)) np += " " + pick(topic_->adjectives);
    const std::string& n = pick(topic_->nouns);
    np += " " + (pl ? plural(n) : n);
    if (np.rfind("a ", 0) == 0 && std::string("aeiou").find(np[2]) != std::string::npos)
      np = "an" + np.substr(1);
    return {np, pl};
  }

  std::string verb_form(const Verb& v, bool plural_subject) {
    if (past_) return v.past;
    return plural_subject ? v.base : v.third;
  }

  std::string clause() {
    auto [subj, pl] = noun_phrase(true);
    std::string s = subj + " ";
    const double r = rng_.uniform();
    if (r < 0.15) {
      s += past_ ? (pl ? "were " : "was ") : (pl ? "are " : "is ");
      s += pick(topic_->adjectives);
    } else {
      s += verb_form(pick(topic_->verbs), pl);
      if (r < 0.8) s += " " + noun_phrase(false).first;
      if (rng_.bernoulli(0.25)) s += " " + pick(kAdverbs);
    }
    if (!phrases_.empty() && rng_.bernoulli(0.6))
      s += " " + pick(phrases_);
    else if (rng_.bernoulli(0.35))
      s += " " + pick(kPreps) + " the " + pick(topic_->places);
    return s;
  }

  std::string sentence() {
    std::string s;
    if (rng_.bernoulli(0.15)) s = pick(kTime) + " ";
    s += clause();
    if (rng_.bernoulli(0.3))
      s += std::string(rng_.bernoulli(0.6) ? " and " : " but ") + clause();
    return s;
  }

  dkp::Rng rng_;
  std::vector<Topic> topics_;
  const Topic* topic_ = nullptr;
  bool past_ = false;
  std::string hero_;
  std::vector<std::pair<std::string, std::string>> cast_;
  Words phrases_;
};

void write_split(Generator& g, const std::filesystem::path& p,
                 std::size_t chars) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  std::size_t n = 0;
  while (n < chars)
    for (const auto& line : g.paragraph()) {
      out << line << '\n';
      n += line.size() + 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toy corpus generator"};
  std::uint64_t seed = 7;
  std::size_t chars = 300000;
  std::size_t phrases = 300;
  std::string out_dir = "data/toy";
  app.add_option("--seed", seed);
  app.add_option("--chars", chars, "total characters across all splits");
  app.add_option("--phrases", phrases, "number of distinct set phrases");
  app.add_option("--out", out_dir);
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out_dir);
    Generator g(seed, phrases);
    const std::filesystem::path dir(out_dir);
    write_split(g, dir / "train.txt", chars * 90 / 100);
    write_split(g, dir / "valid.txt", chars * 5 / 100);
    write_split(g, dir / "test.txt", chars * 5 / 100);
  } catch (const std::exception& e) {
    std::cerr << "gen_corpus: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
