from inference.schema import GenerationResult

# ANSI colors
BLUE = "\033[94m"
GREEN = "\033[92m"
CYAN = "\033[96m"
YELLOW = "\033[93m"
MAGENTA = "\033[95m"
RESET = "\033[0m"
BOLD = "\033[1m"
DIM = "\033[2m"


def pretty_print_results(results: list[GenerationResult]):
    print(f"\n{BOLD}{MAGENTA}{'=' * 80}")
    print("GENERATED CAPTIONS")
    print(f"{'=' * 80}{RESET}\n")

    for result in results:
        print(f"{BOLD}{BLUE}scene {result.id}{RESET}")
        print(f"{'-' * 60}")
        print(f"{DIM}{YELLOW}visual:{RESET} {result.visual_caption}")

        if not result.refined:
            print(f"{DIM}(no OCR tokens, nothing to refine){RESET}")
        for rank, record in enumerate(result.refined, 1):
            graph = ", ".join(record.graph) if record.graph else "-"
            print(
                f"{GREEN}#{rank}{RESET} {BOLD}{record.anchor}{RESET} "
                f"{DIM}(score {record.anchor_score:.3f}, graph [{graph}]){RESET}"
            )
            print(f"   {CYAN}{record.caption}{RESET}")
        print(f"{DIM}{'=' * 80}{RESET}\n")
