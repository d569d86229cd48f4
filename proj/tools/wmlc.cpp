#include <fstream>
#include <iostream>
#include <iterator>

#include <CLI11.hpp>

#include "wap/error.hpp"
#include "wap/wml.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WML text <-> tokenized binary"};
  app.require_subcommand(1);
  std::string file;
  std::string output;
  auto* enc = app.add_subcommand("encode", "markup file to binary on stdout");
  enc->add_option("file", file)->required();
  enc->add_option("-o,--output", output, "write here instead of stdout");
  auto* dec = app.add_subcommand("decode", "binary file to canonical markup on stdout");
  dec->add_option("file", file)->required();
  dec->add_option("-o,--output", output, "write here instead of stdout");
  CLI11_PARSE(app, argc, argv);

  try {
    const std::string input = slurp(file);
    std::string result;
    if (*enc) {
      const wap::Bytes bin = wap::wml::encode(wap::wml::parse(input));
      result.assign(bin.begin(), bin.end());
    } else {
      const wap::Bytes bin(input.begin(), input.end());
      result = wap::wml::serialize(wap::wml::decode(bin)) + "\n";
    }
    if (output.empty()) {
      std::cout.write(result.data(), static_cast<std::streamsize>(result.size()));
    } else {
      std::ofstream out(output, std::ios::binary);
      out.write(result.data(), static_cast<std::streamsize>(result.size()));
      if (!out) throw std::runtime_error("cannot write " + output);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "wmlc: " << file << ": " << e.what() << '\n';
    return 1;
  }
}
