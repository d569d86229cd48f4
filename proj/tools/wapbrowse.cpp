#include <iostream>

#include "client_setup.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Line-oriented WML browser: type a link number to follow it, q to quit"};
  tools::ClientArgs args;
  std::string url;
  tools::add_client_flags(app, args);
  app.add_option("url", url, "start page")->required();
  CLI11_PARSE(app, argc, argv);

  tools::ClientStack client;
  wap::ua::RenderedDeck deck;
  try {
    client = tools::make_client(args);
    deck = wap::ua::render_result(client.agent->fetch(url));
  } catch (const std::exception& e) {
    std::cerr << "wapbrowse: " << e.what() << '\n';
    return 3;
  }

  while (true) {
    std::cout << "----\n";
    tools::print_deck(std::cout, deck);
    std::cout << "> " << std::flush;
    std::string input;
    if (!std::getline(std::cin, input) || input == "q") break;
    if (input.empty()) continue;
    std::size_t index = 0;
    try {
      index = std::stoul(input);
    } catch (const std::exception&) {
      std::cout << "enter a link number or q\n";
      continue;
    }
    try {
      deck = client.agent->navigate(deck, index).second;
    } catch (const wap::Error& e) {
      std::cout << e.what() << '\n';
      if (e.code() != wap::Errc::NoSuchLink && e.code() != wap::Errc::EmptyDeck) return 3;
    }
  }
  return 0;
}
