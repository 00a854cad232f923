/** Keyboard-first interaction: number keys pick labels, Enter submits,
 * r reveals the model prediction, arrows move the token cursor. */

export interface KeyBindings {
  onLabelIndex: (index: number) => void;
  onSubmit: () => void;
  onReveal: () => void;
  onPrevToken: () => void;
  onNextToken: () => void;
  onClearToken: () => void;
}

function isWritableElement(el: EventTarget | null): boolean {
  if (!(el instanceof HTMLElement)) return false;
  if (el instanceof HTMLInputElement) return el.type === "text";
  return el instanceof HTMLTextAreaElement || el.isContentEditable;
}

/** Translate one keyboard event into a binding call; true when handled. */
export function dispatchKey(key: string, bindings: KeyBindings): boolean {
  if (key >= "1" && key <= "9") {
    bindings.onLabelIndex(key.charCodeAt(0) - "1".charCodeAt(0));
    return true;
  }
  switch (key) {
    case "Enter":
      bindings.onSubmit();
      return true;
    case "r":
      bindings.onReveal();
      return true;
    case "ArrowLeft":
      bindings.onPrevToken();
      return true;
    case "ArrowRight":
      bindings.onNextToken();
      return true;
    case "Backspace":
      bindings.onClearToken();
      return true;
    default:
      return false;
  }
}

/** Attach to the document; returns a detach function. */
export function installKeyboard(bindings: KeyBindings): () => void {
  const handler = (e: KeyboardEvent) => {
    if (e.altKey || e.ctrlKey || e.metaKey) return;
    if (isWritableElement(e.target)) return;
    if (dispatchKey(e.key, bindings)) e.preventDefault();
  };
  document.addEventListener("keydown", handler);
  return () => document.removeEventListener("keydown", handler);
}
