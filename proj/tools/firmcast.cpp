#include <string>
#include <vector>

#include "firmcast/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return firmcast::cli::dispatch(std::move(args));
}
