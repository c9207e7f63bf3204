// Writes a synthetic corpus as train/dev/test files for the synmt tool.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "synmt/error.hpp"
#include "synmt/toy.hpp"

using namespace synmt;

namespace {

ToyCorpus slice(const ToyCorpus& c, std::size_t begin, std::size_t end) {
  ToyCorpus out;
  for (std::size_t i = begin; i < end; ++i) {
    out.text.source.push_back(c.text.source[i]);
    out.text.target.push_back(c.text.target[i]);
    out.text.trees.push_back(c.text.trees[i]);
    out.gold.push_back(c.gold[i]);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic parallel corpus with trees and gold alignments"};
  std::string kind = "grammar", dir = ".";
  std::size_t train = 160, dev = 20, test = 20;
  std::uint64_t seed = 1;
  app.add_option("--kind", kind, "grammar | attachment | copy")->check(CLI::IsMember({"grammar", "attachment", "copy"}));
  app.add_option("--out", dir, "output directory");
  app.add_option("--train", train);
  app.add_option("--dev", dev);
  app.add_option("--test", test);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  try {
    const std::size_t n = train + dev + test;
    ToyCorpus all = kind == "grammar"      ? make_grammar_corpus(n, seed)
                    : kind == "attachment" ? make_attachment_corpus(n, seed)
                                           : make_copy_corpus(n, 20, 2, 8, seed);
    std::filesystem::create_directories(dir);
    write_toy_corpus(slice(all, 0, train), dir, "train");
    if (dev) write_toy_corpus(slice(all, train, train + dev), dir, "dev");
    if (test) write_toy_corpus(slice(all, train + dev, n), dir, "test");
    std::cerr << "wrote " << n << " pairs to " << dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
