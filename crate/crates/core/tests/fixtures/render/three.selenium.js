await driver.wait(async () => {
  const e1 = await driver.findElements({ xpath: "//*[@id=\"age\"]" });
  if (e1.length === 0 || (await e1[0].getText()) !== "23") return false;
  const e2 = await driver.findElements({ xpath: "/html/body/ul[1]" });
  if (e2.length === 0 || (await e2[0].findElements({ xpath: "./*" })).length !== 0) return false;
  const e3 = await driver.findElements({ xpath: "//*[@id=\"spinner\"]" });
  if (e3.length === 0 || (await e3[0].getAttribute("style")) !== "display: none;") return false;
  return true;
}, 4000, "wefix: explicit wait timed out", 100);
