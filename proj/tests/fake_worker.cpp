// Protocol worker used by the pool tests.
//   serve     reference interpreter, parent enforces timeouts
//   garbage   answers every request with a non-JSON line
//   wrong-id  answers with a mismatched correlation id
//   exit      exits without reading

#include <iostream>
#include <string>

#include "callforge/sandbox.hpp"

int main(int argc, char **argv) {
  std::string mode = argc > 1 ? argv[1] : "serve";
  if (mode == "serve") return callforge::serve_worker_protocol(0, 1, false);
  if (mode == "exit") return 3;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (mode == "garbage") {
      std::cout << "Traceback (most recent call last):" << std::endl;
    } else {
      callforge::ExecResponse r;
      r.id = "someone-else";
      r.status = callforge::ExecResponse::Status::Ok;
      r.value_repr = "1";
      std::cout << callforge::encode_response(r).dump() << std::endl;
    }
  }
  return 0;
}
