#include <iostream>

#include "client_setup.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Fetch a URL through a WAP gateway and print it as text"};
  tools::ClientArgs args;
  std::string url;
  tools::add_client_flags(app, args);
  app.add_option("url", url, "absolute http URL")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    auto client = tools::make_client(args);
    auto result = client.agent->fetch(url);
    if (result.document) {
      tools::print_deck(std::cout, wap::ua::render(*result.document));
    } else {
      std::cout.write(reinterpret_cast<const char*>(result.reply.body.data()),
                      static_cast<std::streamsize>(result.reply.body.size()));
      if (!result.reply.body.empty() && result.reply.body.back() != '\n') std::cout << '\n';
    }
    if (result.reply.status >= 400) {
      std::cerr << "wapget: status " << result.reply.status << '\n';
      return 3;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "wapget: " << e.what() << '\n';
    return 3;
  }
}
