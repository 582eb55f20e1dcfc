// Minimal model server speaking the remote protocol, backed by a TableLM
// file and the hash embedder. Lets the CLI's remote backends be exercised
// end to end without any real model:
//
//   toy_server --lm tasks/demo/demo.lm.json --port 8080
//   semdid decode --lm http://localhost:8080 --eos 9 ...

#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>

#include "semdid/models.hpp"
#include "semdid/remote.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Toy model server for the SemDiD remote protocol"};
  std::string lm_path;
  int port = 8080;
  int dim = 16;
  std::uint64_t embedder_seed = 42;
  app.add_option("--lm", lm_path, "TableLM JSON file")->required();
  app.add_option("--port", port, "listen port (default 8080)");
  app.add_option("--dim", dim, "embedding dimension (default 16)");
  app.add_option("--embedder-seed", embedder_seed,
                 "seed for the hash embedder (default 42)");
  CLI11_PARSE(app, argc, argv);

  try {
    const semdid::TableLM lm = semdid::TableLM::from_file(lm_path);
    const semdid::HashEmbedder embedder(dim, embedder_seed);
    httplib::Server srv;
    semdid::remote::attach_backends(srv, lm, embedder);
    std::cout << "serving " << lm_path << " on port " << port << "\n";
    if (!srv.listen("0.0.0.0", port)) {
      std::cerr << "failed to bind port " << port << "\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
