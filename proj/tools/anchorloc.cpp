#include <string>
#include <vector>

#include "anchorloc/cli.hpp"

int main(int argc, char** argv) {
    return anchorloc::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
