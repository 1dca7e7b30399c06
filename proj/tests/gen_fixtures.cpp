// Regenerates the golden fixtures under fixtures/ and prints the checksums
// frozen in the tests. Run manually when the schema or generators change,
// then review the diff.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "icl/serialize.hpp"

using namespace icl;

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "fixtures";
  std::filesystem::create_directories(dir);

  const ProblemConfig cfg{3, 2, 2, 2, 0.5, 1};
  const Dictionary dict = gen_dictionary(cfg);
  write_file(dir + "/dictionary_k3.json", to_json(dict));

  const PromptInstance prompt =
      sample_prompt(dict, LambdaDist::standard_gaussian(), 0.01, 3);
  write_file(dir + "/prompt_k3.json", to_json(prompt));

  const Params small = init_params(2, 2, 3, 1.0, 5);
  write_file(dir + "/params_small.json", to_json(small));

  // Desk-scale prompt matching configs/fixture.cfg; used by the CLI smoke run.
  const ProblemConfig desk{8, 4, 4, 2, 0.1, 12};
  const Dictionary desk_dict = gen_dictionary(desk);
  const PromptInstance desk_prompt =
      sample_prompt(desk_dict, LambdaDist::standard_gaussian(), desk.tau, 19);
  write_file(dir + "/prompt_desk.json", to_json(desk_prompt));

  const Params big = init_params(64, 100, 200, 1.0, 7);
  std::printf("params(H=64,d=100,K=200,beta=1,seed=7) fnv1a64 = 0x%llx\n",
              static_cast<unsigned long long>(fnv1a64(to_json(big))));
  std::printf("dictionary_k3 fnv1a64 = 0x%llx\n",
              static_cast<unsigned long long>(fnv1a64(to_json(dict))));
  std::cout << "fixtures written to " << dir << "\n";
  return 0;
}
