#include "envelope_cli.hpp"

int main(int argc, char** argv)
{
    return envelope::cli::parse_and_run(argc, argv);
}
