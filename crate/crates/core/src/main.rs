fn main() -> std::process::ExitCode {
    crosspoint::cli_io::main_entry()
}
