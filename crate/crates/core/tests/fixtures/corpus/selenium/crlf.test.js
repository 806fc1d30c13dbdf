const { Builder, By } = require("selenium-webdriver");

it("clicks through", async function () {
  const driver = await new Builder().forBrowser("chrome").build();
  await driver.get("http://localhost:5000");
  await driver.findElement(By.linkText("Next")).click();
  await driver.findElement(By.linkText("Back")).click();
  await driver.quit();
});
