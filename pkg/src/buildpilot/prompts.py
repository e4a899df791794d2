"""Prompt builders and agent role tags.

Each builder returns (system, user) strings; call sites wrap them in
ChatMessages. Tags name the agent roles for ledger attribution and replay
fixture keys, so they must stay stable.
"""

from __future__ import annotations

TAG_SEARCH_I = "SearchAgent-I"
TAG_SEARCH_II = "SearchAgent-II"
TAG_SUMMARIZE = "SummarizeAgent"
TAG_MASTER = "MasterAgent"
TAG_SOLVER = "Solver"  # per-agent tags are Solver-0, Solver-1, ...
TAG_SYNTHESIS = "SolverSynthesis"
TAG_CLASSIFIER = "ErrorClassifier"
TAG_SEARCH_AGG = "SearchAggregator"
TAG_README_AI = "ReadmeAgent"
TAG_RAG = "RagAgent"
TAG_REACT = "ReactAgent"
TAG_PLANNER = "Planner"
TAG_TOOLCALL = "ToolCallAgent"

_COMMANDS_FORMAT = (
    "Answer with a single fenced ```bash block containing one shell command "
    "per line, dependency installation first. No prose inside the block. "
    "If you have nothing to propose, answer exactly NONE."
)


def candidate_files(structure: str) -> tuple[str, str]:
    system = (
        "You locate build documentation inside source repositories. "
        "Given a directory listing, name the files most likely to explain how "
        "to compile the project from source (readmes, install guides, build "
        "scripts documentation)."
    )
    user = (
        f"Repository structure:\n\n{structure}\n\n"
        "List up to 5 candidate files as a numbered list of repository-relative "
        "paths, most promising first. Paths only, no commentary. "
        "Answer NONE if nothing looks relevant."
    )
    return system, user


def candidate_files_review(structure: str, proposed: list[str]) -> tuple[str, str]:
    system = (
        "You double-check a colleague's shortlist of build-documentation files "
        "against the real repository structure, removing implausible entries "
        "and adding obviously better ones."
    )
    listed = "\n".join(f"{i + 1}. {p}" for i, p in enumerate(proposed)) or "(empty)"
    user = (
        f"Repository structure:\n\n{structure}\n\n"
        f"Colleague's shortlist:\n{listed}\n\n"
        "Reply with your corrected numbered list of repository-relative paths, "
        "most promising first, up to 5 entries. Paths only. Answer NONE if none apply."
    )
    return system, user


def summarize_instructions(path: str, content: str, pages: list[tuple[str, str]],
                           strict: bool = False) -> tuple[str, str]:
    system = (
        "You turn build documentation into an exact, runnable command sequence "
        "for a fresh Ubuntu 22.04 container with no developer tools assumed. "
        + _COMMANDS_FORMAT
    )
    parts = [f"File {path}:\n\n{content}"]
    for url, text in pages:
        parts.append(f"Linked page {url}:\n\n{text}")
    ask = (
        "Extract the compilation instructions as commands. Include dependency "
        "installation (apt-get with -y) before build steps."
    )
    if strict:
        ask += (
            " Your previous answer could not be parsed. Reply with ONLY the "
            "fenced bash block this time."
        )
    parts.append(ask)
    return system, "\n\n---\n\n".join(parts)


def self_fix(command: str, stderr: str, stdout: str, classification: str,
             os_fingerprint: str, attempt: int, prior_attempts: list[str]) -> tuple[str, str]:
    system = (
        "You fix build failures directly. Given a failing command and its "
        "output, propose the shell commands that resolve the failure so the "
        "original command can be retried. " + _COMMANDS_FORMAT
    )
    prior = "\n".join(f"- {p}" for p in prior_attempts) or "(none)"
    user = (
        f"Environment: {os_fingerprint}\n"
        f"Failing command: {command}\n"
        f"Error class: {classification}\n"
        f"stderr:\n{stderr}\n\n"
        f"stdout:\n{stdout}\n\n"
        f"Fixes already tried:\n{prior}\n\n"
        f"This is direct-fix attempt {attempt + 1}. Propose fix commands, or "
        "answer NONE if this needs deeper investigation."
    )
    return system, user


def solver_initial(agent_index: int, error_report: str, evidence: str) -> tuple[str, str]:
    system = (
        f"You are build engineer {agent_index + 1} in a panel independently "
        "diagnosing a compilation failure. Work from the error report alone "
        "and commit to one concrete fix. " + _COMMANDS_FORMAT
    )
    user = error_report
    if evidence:
        user += f"\n\nRelevant findings from a web search:\n{evidence}"
    user += "\n\nPropose the fix commands."
    return system, user


def solver_revise(agent_index: int, error_report: str, own: str,
                  others: list[tuple[int, str]]) -> tuple[str, str]:
    system = (
        f"You are build engineer {agent_index + 1} in a panel. Compare your "
        "proposed fix with the other engineers' proposals and either defend "
        "or revise yours. " + _COMMANDS_FORMAT
    )
    other_text = "\n\n".join(
        f"Engineer {i + 1} proposed:\n{sol}" for i, sol in others
    )
    user = (
        f"{error_report}\n\nYour current proposal:\n{own}\n\n"
        f"{other_text}\n\nReply with your (possibly revised) fix commands."
    )
    return system, user


def solver_synthesis(error_report: str, solutions: list[tuple[int, str]]) -> tuple[str, str]:
    system = (
        "You merge a panel of build engineers' converged fixes into one final "
        "command sequence, deduplicated and ordered. " + _COMMANDS_FORMAT
    )
    body = "\n\n".join(f"Engineer {i + 1}:\n{sol}" for i, sol in solutions)
    user = f"{error_report}\n\nConverged proposals:\n\n{body}\n\nFinal fix commands:"
    return system, user


def classify_error(command: str, stderr_tail: str) -> tuple[str, str]:
    system = (
        "You label build failures. Answer with exactly one word: dependency, "
        "toolchain, configuration, or unknown."
    )
    user = f"Command: {command}\nLast lines of stderr:\n{stderr_tail}\n\nLabel:"
    return system, user


def search_aggregate(query: str, pages: list[tuple[str, str]]) -> tuple[str, str]:
    system = (
        "You condense web search results into the facts relevant to fixing a "
        "build error: package names, required versions, exact commands, and "
        "configuration flags. Quote commands verbatim; skip marketing text."
    )
    parts = [f"Search query: {query}"]
    for url, text in pages:
        parts.append(f"Result {url}:\n{text}")
    parts.append("Summarize the actionable findings in a short bullet list.")
    return system, "\n\n---\n\n".join(parts)


def readme_generate(project: str, files: list[tuple[str, str]]) -> tuple[str, str]:
    system = (
        "You write operational README files for C/C++ projects. The output "
        "must contain a section titled exactly '## How to compile/build from "
        "source code' holding a fenced ```bash block with the full command "
        "sequence for a fresh Ubuntu 22.04 container, dependencies first."
    )
    parts = [f"Project: {project}"]
    for path, content in files:
        parts.append(f"File {path}:\n\n{content}")
    parts.append("Write the README now.")
    return system, "\n\n---\n\n".join(parts)


def rag_generate(project: str, chunks: list[tuple[str, str]]) -> tuple[str, str]:
    system = (
        "You produce the command sequence that compiles a project from "
        "source on fresh Ubuntu 22.04, using only the documentation excerpts "
        "provided. " + _COMMANDS_FORMAT
    )
    parts = [f"Project: {project}"]
    for source, text in chunks:
        parts.append(f"Excerpt from {source}:\n{text}")
    parts.append("Commands to compile the project:")
    return system, "\n\n---\n\n".join(parts)


REACT_TOOLS_HELP = """You drive the compilation of a source repository inside a fresh Ubuntu 22.04 sandbox. One step per reply, in this exact format:

Thought: <your reasoning>
Action: <tool>(<argument>)

Tools:
- shell("<command>"): run a shell command in the workspace
- file_navigator(): list candidate build-guide files
- instruction_extractor("<path>"): extract build commands from a file
- website_search("<query>"): search the web for a build error
- multi_agent_discussion(): convene a panel on the current error

When the build has succeeded or you cannot proceed, reply instead with:
Final: succeeded
or
Final: failed

Never combine an Action and a Final in one reply."""


def react_step(history: list[str]) -> tuple[str, str]:
    return REACT_TOOLS_HELP, "\n\n".join(history) if history else "Begin."


def plan_initial(structure: str, guide_text: str) -> tuple[str, str]:
    system = (
        "You plan the complete command sequence that compiles a repository "
        "on fresh Ubuntu 22.04, dependencies first. " + _COMMANDS_FORMAT
    )
    user = f"Repository structure:\n\n{structure}\n"
    if guide_text:
        user += f"\nBuild documentation found in the repository:\n\n{guide_text}\n"
    user += "\nPlan the full build command sequence."
    return system, user


def plan_revise(plan: list[str], failed: str, stderr: str) -> tuple[str, str]:
    system = (
        "You repair a build plan after a step failed. Produce the full "
        "remaining command sequence from scratch, fixing the cause of the "
        "failure. " + _COMMANDS_FORMAT
    )
    listed = "\n".join(plan)
    user = (
        f"Original plan:\n{listed}\n\nFailed step: {failed}\n"
        f"stderr:\n{stderr}\n\nRevised full plan:"
    )
    return system, user


TOOLCALL_SYSTEM = (
    "You compile the repository mounted in your sandbox on fresh Ubuntu "
    "22.04. Use the provided tools to inspect the repository, run commands, "
    "and resolve errors. When the build is complete (or impossible), reply "
    "with a short plain-text summary beginning with SUCCEEDED or FAILED."
)
